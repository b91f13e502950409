//! Uniform-grid fields with tensor-product Catmull–Rom interpolation.
//!
//! The interpolant is C1 and reproduces node values exactly; values converge
//! at third order and first derivatives at second order. On a torus the
//! stencil wraps; in free space nodes outside the box count as zero.
//!
//! Files: a JSON container (`header` + flat `values`) or a CSV with `#`
//! header lines followed by one value per line. Values are row-major with
//! the last axis fastest and components innermost. Both formats round-trip
//! bit-exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

use super::{Domain, ScalarField, Support, VectorField, VelocityField};
use crate::error::{Error, Result};
use crate::sde::{Mat, Point};

pub const INTERPOLATION_ORDER: &str = "catmull-rom-cubic";
const FORMAT_TAG: &str = "stochflow-grid";
const FORMAT_VERSION: u32 = 1;

/// Node geometry shared by every component of a grid field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridLayout<const D: usize> {
    pub domain: Domain<D>,
    pub origin: Point<D>,
    pub spacing: Point<D>,
    pub shape: [usize; D],
}

impl<const D: usize> GridLayout<D> {
    /// Periodic grid with nodes `i * period / n`, `i = 0..n`.
    pub fn torus(period: f64, n: usize) -> Self {
        GridLayout {
            domain: Domain::torus(period),
            origin: Point::<D>::zeros(),
            spacing: Point::<D>::repeat(period / n as f64),
            shape: [n; D],
        }
    }

    /// Free-space box `[lo, hi]^D` with `n` nodes per axis including both ends.
    pub fn free_box(lo: f64, hi: f64, n: usize) -> Self {
        GridLayout {
            domain: Domain::FreeSpace,
            origin: Point::<D>::repeat(lo),
            spacing: Point::<D>::repeat((hi - lo) / (n - 1) as f64),
            shape: [n; D],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.iter().any(|&n| n < 4) {
            return Err(Error::invalid("shape", "cubic interpolation needs at least 4 nodes per axis"));
        }
        if self.spacing.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::invalid("spacing", "grid spacing must be positive"));
        }
        if let Domain::Torus { period } = self.domain {
            for a in 0..D {
                let expect = period[a] / self.shape[a] as f64;
                if (self.spacing[a] - expect).abs() > 1e-12 * expect {
                    return Err(Error::invalid("spacing", "periodic grid spacing must be period / n"));
                }
            }
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Multi-index of flat node index `k` (last axis fastest).
    pub fn multi_index(&self, mut k: usize) -> [usize; D] {
        let mut idx = [0usize; D];
        for a in (0..D).rev() {
            idx[a] = k % self.shape[a];
            k /= self.shape[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize; D]) -> usize {
        let mut k = 0;
        for a in 0..D {
            k = k * self.shape[a] + idx[a];
        }
        k
    }

    pub fn node(&self, k: usize) -> Point<D> {
        let idx = self.multi_index(k);
        Point::<D>::from_fn(|a, _| self.origin[a] + idx[a] as f64 * self.spacing[a])
    }

    pub fn nodes(&self) -> Vec<Point<D>> {
        (0..self.n_nodes()).map(|k| self.node(k)).collect()
    }
}

/// Catmull–Rom weights for nodes `i-1, i, i+1, i+2` at fraction `t`, and
/// their derivatives in `t`.
#[inline]
fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField<const D: usize> {
    layout: GridLayout<D>,
    components: usize,
    values: Vec<f64>,
    clamp: Option<(f64, f64)>,
}

impl<const D: usize> GridField<D> {
    pub fn from_values(layout: GridLayout<D>, components: usize, values: Vec<f64>) -> Result<Self> {
        layout.validate()?;
        if components == 0 {
            return Err(Error::invalid("components", "must be at least 1"));
        }
        if values.len() != layout.n_nodes() * components {
            return Err(Error::invalid(
                "values",
                format!("expected {} values, got {}", layout.n_nodes() * components, values.len()),
            ));
        }
        Ok(GridField {
            layout,
            components,
            values,
            clamp: None,
        })
    }

    pub fn zeros(layout: GridLayout<D>, components: usize) -> Result<Self> {
        Self::from_values(layout, components, vec![0.0; layout.n_nodes() * components])
    }

    /// Sample a scalar function at the nodes.
    pub fn sample_scalar(layout: GridLayout<D>, f: impl Fn(&Point<D>) -> f64 + Sync) -> Result<Self> {
        layout.validate()?;
        let values: Vec<f64> = (0..layout.n_nodes()).into_par_iter().map(|k| f(&layout.node(k))).collect();
        Self::from_values(layout, 1, values)
    }

    /// Sample a `D`-vector function at the nodes.
    pub fn sample_vector(layout: GridLayout<D>, f: impl Fn(&Point<D>) -> Point<D> + Sync) -> Result<Self> {
        layout.validate()?;
        let values: Vec<f64> = (0..layout.n_nodes())
            .into_par_iter()
            .flat_map_iter(|k| {
                let v = f(&layout.node(k));
                (0..D).map(move |a| v[a])
            })
            .collect();
        Self::from_values(layout, D, values)
    }

    pub fn layout(&self) -> &GridLayout<D> {
        &self.layout
    }

    pub fn domain(&self) -> &Domain<D> {
        &self.layout.domain
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Value of component `c` at node `k`.
    pub fn at(&self, k: usize, c: usize) -> f64 {
        self.values[k * self.components + c]
    }

    pub fn node_vector(&self, k: usize) -> Point<D> {
        Point::<D>::from_fn(|a, _| self.values[k * self.components + a])
    }

    /// Extract one component as a scalar grid.
    pub fn component(&self, c: usize) -> GridField<D> {
        let values = (0..self.layout.n_nodes()).map(|k| self.at(k, c)).collect();
        GridField {
            layout: self.layout,
            components: 1,
            values,
            clamp: None,
        }
    }

    /// Min and max node values of a scalar grid (including the implicit zero
    /// outside a free-space box).
    pub fn node_range(&self) -> (f64, f64) {
        let (mut lo, mut hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !self.layout.domain.is_periodic() {
            lo = lo.min(0.0);
            hi = hi.max(0.0);
        }
        (lo, hi)
    }

    /// Clamp interpolated scalar values to the node range. The interpolant
    /// may overshoot near extrema; clamping keeps it inside the data range.
    pub fn clamped_to_node_range(mut self) -> Self {
        self.clamp = Some(self.node_range());
        self
    }

    /// `sum v h^D` per component.
    pub fn integral(&self, c: usize) -> f64 {
        let col: Vec<f64> = (0..self.layout.n_nodes()).map(|k| self.at(k, c)).collect();
        crate::stats::pairwise_sum(&col) * self.layout.cell_volume()
    }

    /// Interpolated values and gradients of the first `C` components.
    pub fn interpolate<const C: usize>(&self, x: &Point<D>) -> ([f64; C], [Point<D>; C]) {
        self.eval::<C, true>(x)
    }

    /// Interpolated values of the first `C` components.
    pub fn interpolate_values<const C: usize>(&self, x: &Point<D>) -> [f64; C] {
        self.eval::<C, false>(x).0
    }

    fn eval<const C: usize, const GRAD: bool>(&self, x: &Point<D>) -> ([f64; C], [Point<D>; C]) {
        debug_assert!(C <= self.components);
        let l = &self.layout;
        let mut base = [0isize; D];
        let mut w = [[0.0f64; 4]; D];
        let mut dw = [[0.0f64; 4]; D];
        for a in 0..D {
            let mut xi = (x[a] - l.origin[a]) / l.spacing[a];
            // snap round-off so nodes are reproduced exactly
            if (xi - xi.round()).abs() < 1e-9 {
                xi = xi.round();
            }
            let i = xi.floor();
            let (wa, dwa) = catmull_rom(xi - i);
            base[a] = i as isize;
            w[a] = wa;
            dw[a] = dwa;
        }
        // flat offsets of the four stencil nodes per axis; None outside a free box
        let periodic = l.domain.is_periodic();
        let mut idx = [[None::<usize>; 4]; D];
        let mut stride = 1usize;
        for a in (0..D).rev() {
            let n = l.shape[a] as isize;
            // one division per axis; the stencil then wraps by at most one period
            let first = if periodic { (base[a] - 1).rem_euclid(n) } else { base[a] - 1 };
            for (k, slot) in idx[a].iter_mut().enumerate() {
                let mut i = first + k as isize;
                if periodic {
                    while i >= n {
                        i -= n;
                    }
                } else if i < 0 || i >= n {
                    continue;
                }
                *slot = Some(i as usize * stride);
            }
            stride *= l.shape[a];
        }
        let mut val = [0.0f64; C];
        let mut grad = [Point::<D>::zeros(); C];
        let mut add = |flat: usize, off: [usize; D]| {
            let mut weight = 1.0;
            for a in 0..D {
                weight *= w[a][off[a]];
            }
            let row = &self.values[flat * self.components..flat * self.components + C];
            for c in 0..C {
                val[c] += weight * row[c];
            }
            if GRAD {
                for a in 0..D {
                    let mut p = dw[a][off[a]] / l.spacing[a];
                    for b in 0..D {
                        if b != a {
                            p *= w[b][off[b]];
                        }
                    }
                    for c in 0..C {
                        grad[c][a] += p * row[c];
                    }
                }
            }
        };
        match D {
            2 => {
                for (k0, i0) in idx[0].iter().enumerate() {
                    let Some(i0) = i0 else { continue };
                    for (k1, i1) in idx[1].iter().enumerate() {
                        let Some(i1) = i1 else { continue };
                        let mut off = [0usize; D];
                        off[0] = k0;
                        off[1] = k1;
                        add(i0 + i1, off);
                    }
                }
            }
            _ => 'outer: for combo in 0..1usize << (2 * D) {
                let mut flat = 0usize;
                let mut off = [0usize; D];
                for a in 0..D {
                    let k = (combo >> (2 * (D - 1 - a))) & 3;
                    let Some(i) = idx[a][k] else { continue 'outer };
                    off[a] = k;
                    flat += i;
                }
                add(flat, off);
            },
        }
        (val, grad)
    }

    /// Header describing the layout, as written to files.
    pub fn header(&self) -> GridHeader {
        let l = &self.layout;
        GridHeader {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            kind: if l.domain.is_periodic() { "torus" } else { "free-space" }.to_string(),
            dimension: D,
            period: match l.domain {
                Domain::Torus { period } => Some(period.iter().copied().collect()),
                Domain::FreeSpace => None,
            },
            origin: l.origin.iter().copied().collect(),
            spacing: l.spacing.iter().copied().collect(),
            shape: l.shape.to_vec(),
            components: self.components,
            order: INTERPOLATION_ORDER.to_string(),
        }
    }

    fn from_header(header: &GridHeader, values: Vec<f64>) -> Result<Self> {
        if header.format != FORMAT_TAG || header.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format {} v{}", header.format, header.version)));
        }
        if header.dimension != D {
            return Err(Error::Dimension(format!("grid file is {}D, expected {D}D", header.dimension)));
        }
        if header.order != INTERPOLATION_ORDER {
            return Err(Error::Format(format!("unsupported interpolation order {}", header.order)));
        }
        let vec_of = |v: &[f64], what: &str| -> Result<Point<D>> {
            if v.len() != D {
                return Err(Error::Format(format!("{what} must have {D} entries")));
            }
            Ok(Point::<D>::from_fn(|i, _| v[i]))
        };
        let domain = match (header.kind.as_str(), &header.period) {
            ("torus", Some(p)) => Domain::Torus { period: vec_of(p, "period")? },
            ("free-space", None) => Domain::FreeSpace,
            (k, _) => return Err(Error::Format(format!("bad domain kind/period combination: {k}"))),
        };
        if header.shape.len() != D {
            return Err(Error::Format(format!("shape must have {D} entries")));
        }
        let mut shape = [0usize; D];
        shape.copy_from_slice(&header.shape);
        let layout = GridLayout {
            domain,
            origin: vec_of(&header.origin, "origin")?,
            spacing: vec_of(&header.spacing, "spacing")?,
            shape,
        };
        Self::from_values(layout, header.components, values)
    }

    fn check_finite(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("grid contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        self.check_finite()?;
        Ok(serde_json::to_string(&GridFile {
            header: self.header(),
            values: self.values.clone(),
        })?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: GridFile = serde_json::from_str(s)?;
        Self::from_header(&f.header, f.values)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        self.check_finite()?;
        let h = self.header();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        writeln!(w, "# format={}", h.format)?;
        writeln!(w, "# version={}", h.version)?;
        writeln!(w, "# kind={}", h.kind)?;
        writeln!(w, "# dimension={}", h.dimension)?;
        if let Some(p) = &h.period {
            writeln!(w, "# period={}", join(p))?;
        }
        writeln!(w, "# origin={}", join(&h.origin))?;
        writeln!(w, "# spacing={}", join(&h.spacing))?;
        writeln!(
            w,
            "# shape={}",
            h.shape.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
        )?;
        writeln!(w, "# components={}", h.components)?;
        writeln!(w, "# order={}", h.order)?;
        writeln!(w, "value")?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        let mut values = Vec::new();
        let mut seen_column = false;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| Error::Format(format!("bad header line: {line}")))?;
                kv.insert(k.trim().to_string(), v.trim().to_string());
            } else if !seen_column {
                if line != "value" {
                    return Err(Error::Format(format!("expected `value` column, got {line}")));
                }
                seen_column = true;
            } else {
                values.push(line.parse::<f64>().map_err(|e| Error::Format(format!("{line}: {e}")))?);
            }
        }
        let get = |k: &str| kv.get(k).cloned().ok_or_else(|| Error::Format(format!("missing header key {k}")));
        let floats = |s: String| -> Result<Vec<f64>> {
            s.split(',')
                .map(|x| x.parse::<f64>().map_err(|e| Error::Format(e.to_string())))
                .collect()
        };
        let header = GridHeader {
            format: get("format")?,
            version: get("version")?.parse().map_err(|_| Error::Format("bad version".into()))?,
            kind: get("kind")?,
            dimension: get("dimension")?.parse().map_err(|_| Error::Format("bad dimension".into()))?,
            period: kv.get("period").cloned().map(floats).transpose()?,
            origin: floats(get("origin")?)?,
            spacing: floats(get("spacing")?)?,
            shape: get("shape")?
                .split(',')
                .map(|x| x.parse::<usize>().map_err(|e| Error::Format(e.to_string())))
                .collect::<Result<_>>()?,
            components: get("components")?.parse().map_err(|_| Error::Format("bad components".into()))?,
            order: get("order")?,
        };
        Self::from_header(&header, values)
    }

    /// Load from `.json` or `.csv` by extension.
    pub fn load(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&std::fs::read_to_string(path)?),
            Some("csv") => Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?)),
            _ => Err(Error::Format(format!("unknown grid file extension: {}", path.display()))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(std::fs::write(path, self.to_json_string()?)?),
            Some("csv") => self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?)),
            _ => Err(Error::Format(format!("unknown grid file extension: {}", path.display()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub dimension: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub period: Option<Vec<f64>>,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
    pub components: usize,
    pub order: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    header: GridHeader,
    values: Vec<f64>,
}

impl<const D: usize> ScalarField<D> for GridField<D> {
    fn value(&self, x: &Point<D>) -> f64 {
        let v = self.interpolate_values::<1>(x);
        match self.clamp {
            Some((lo, hi)) => v[0].clamp(lo, hi),
            None => v[0],
        }
    }

    fn gradient(&self, x: &Point<D>) -> Point<D> {
        let (v, g) = self.interpolate::<1>(x);
        match self.clamp {
            Some((lo, hi)) if v[0] < lo || v[0] > hi => Point::<D>::zeros(),
            _ => g[0],
        }
    }

    fn support(&self) -> Option<Support<D>> {
        let l = &self.layout;
        match l.domain {
            Domain::Torus { .. } => None,
            Domain::FreeSpace => Some(Support {
                lo: l.origin - l.spacing,
                hi: l.origin + Point::<D>::from_fn(|a, _| l.shape[a] as f64 * l.spacing[a]),
            }),
        }
    }

    fn range(&self) -> Option<(f64, f64)> {
        self.clamp
    }
}

fn vector_eval<const D: usize>(g: &GridField<D>, x: &Point<D>) -> (Point<D>, Mat<D>) {
    debug_assert_eq!(g.components, D);
    match D {
        2 => {
            let (v, gr) = g.interpolate::<2>(x);
            (
                Point::<D>::from_fn(|i, _| v[i]),
                Mat::<D>::from_fn(|i, j| gr[i][j]),
            )
        }
        3 => {
            let (v, gr) = g.interpolate::<3>(x);
            (
                Point::<D>::from_fn(|i, _| v[i]),
                Mat::<D>::from_fn(|i, j| gr[i][j]),
            )
        }
        _ => {
            let (v, gr) = g.interpolate::<1>(x);
            (
                Point::<D>::from_fn(|i, _| v[i]),
                Mat::<D>::from_fn(|i, j| gr[i][j]),
            )
        }
    }
}

fn vector_values<const D: usize>(g: &GridField<D>, x: &Point<D>) -> Point<D> {
    debug_assert_eq!(g.components, D);
    match D {
        2 => {
            let v = g.interpolate_values::<2>(x);
            Point::<D>::from_fn(|i, _| v[i])
        }
        3 => {
            let v = g.interpolate_values::<3>(x);
            Point::<D>::from_fn(|i, _| v[i])
        }
        _ => {
            let v = g.interpolate_values::<1>(x);
            Point::<D>::from_fn(|i, _| v[i])
        }
    }
}

impl<const D: usize> VectorField<D> for GridField<D> {
    fn value(&self, x: &Point<D>) -> Point<D> {
        vector_values(self, x)
    }
    fn jacobian(&self, x: &Point<D>) -> Mat<D> {
        vector_eval(self, x).1
    }
    fn support(&self) -> Option<Support<D>> {
        ScalarField::support(self)
    }
}

impl<const D: usize> VelocityField<D> for GridField<D> {
    fn velocity(&self, _t: f64, x: &Point<D>) -> Point<D> {
        vector_values(self, x)
    }
    fn gradient(&self, _t: f64, x: &Point<D>) -> Mat<D> {
        vector_eval(self, x).1
    }
}
