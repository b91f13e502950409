//! Fixed-column CSV writers for solver results.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a file
//! read back gives the same bits and identical runs give identical bytes.

use std::io::Write;

use crate::dynamo::GrowthRate;
use crate::error::Result;
use crate::ns::Diagnostics;
use crate::recovery::Recovery;
use crate::sde::Point;
use crate::transport::PointEstimate;

const AXES: [&str; 3] = ["x", "y", "z"];

fn coords<const D: usize>(x: &Point<D>) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn axis_header(d: usize) -> String {
    AXES[..d].join(",")
}

/// `x,y[,z],component,estimate,stderr,n_paths,n_excluded`, one row per
/// point and component. `names` labels the components.
pub fn write_estimates<const D: usize>(
    mut w: impl Write,
    estimates: &[PointEstimate<D>],
    names: &[&str],
) -> Result<()> {
    writeln!(w, "{},component,estimate,stderr,n_paths,n_excluded", axis_header(D))?;
    for e in estimates {
        for (c, est) in e.components.iter().enumerate() {
            let name = names.get(c).copied().unwrap_or("value");
            writeln!(
                w,
                "{},{name},{},{},{},{}",
                coords(&e.point),
                est.mean,
                est.stderr,
                e.n_paths,
                e.n_excluded
            )?;
        }
    }
    Ok(())
}

/// Recovered velocity:
/// `x,y[,z],component,estimate,stderr,tail,n_paths,n_excluded,method`.
pub fn write_recovery<const D: usize>(mut w: impl Write, recovery: &Recovery<D>) -> Result<()> {
    writeln!(
        w,
        "{},component,estimate,stderr,tail,n_paths,n_excluded,method",
        axis_header(D)
    )?;
    for v in &recovery.values {
        for c in 0..D {
            writeln!(
                w,
                "{},u{},{},{},{},{},{},{}",
                coords(&v.point),
                AXES[c],
                v.velocity[c],
                v.stderr[c],
                v.tail[c],
                v.n_paths,
                v.n_excluded,
                recovery.method.tag()
            )?;
        }
    }
    Ok(())
}

/// Per-step diagnostics of a Navier–Stokes run.
pub fn write_diagnostics(mut w: impl Write, diags: &[Diagnostics]) -> Result<()> {
    writeln!(
        w,
        "step,time,kinetic_energy,enstrophy,max_vorticity,circulation,circulation_stderr,\
         mc_stderr_max,mc_stderr_rms,curl_residual,divergence_residual,n_excluded,picard_iterations"
    )?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for d in diags {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            d.step,
            d.time,
            d.kinetic_energy,
            d.enstrophy,
            d.max_vorticity,
            opt(d.circulation),
            opt(d.circulation_stderr),
            d.mc_stderr_max,
            d.mc_stderr_rms,
            d.curl_residual,
            d.divergence_residual,
            d.n_excluded,
            d.picard_iterations
        )?;
    }
    Ok(())
}

/// Magnetic energy at each window time, with the fitted rate on every row.
pub fn write_growth(mut w: impl Write, g: &GrowthRate) -> Result<()> {
    writeln!(w, "time,energy,energy_stderr,rate,rate_stderr,rate_lo,rate_hi")?;
    for ((t, e), se) in g.times.iter().zip(&g.energies).zip(&g.energy_stderr) {
        writeln!(
            w,
            "{t},{e},{se},{},{},{},{}",
            g.rate, g.stderr, g.interval.0, g.interval.1
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Estimate;
    use nalgebra::Vector2;

    #[test]
    fn estimate_rows() {
        let e = PointEstimate::<2> {
            point: Vector2::new(0.5, -1.0),
            components: vec![Estimate {
                mean: 0.1,
                stderr: 0.25,
                n: 4,
            }],
            n_paths: 4,
            n_excluded: 0,
            sample_range: vec![(0.0, 1.0)],
        };
        let mut buf = Vec::new();
        write_estimates(&mut buf, &[e], &["omega"]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "x,y,component,estimate,stderr,n_paths,n_excluded\n0.5,-1,omega,0.1,0.25,4,0\n"
        );
    }
}
