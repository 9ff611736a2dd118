//! Plain CSV writers with a fixed number of significant digits.

use std::io::Write;

use crate::experiments::{Scenario, SweepResult};
use crate::lindblad::{Level, TrajectoryResult};
use crate::optimizer::RunSummary;
use crate::policy::LearningCurve;

pub const SIG_DIGITS: usize = 12;

/// Shortest `%g`-style rendering of `x` with `SIG_DIGITS` significant digits.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

fn row<W: Write + ?Sized>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    let cells: Vec<String> = values.iter().map(|v| format_sig(*v)).collect();
    writeln!(w, "{}", cells.join(","))
}

/// Columns `t, rho_gg, rho_ee, rho_ff, rho_ss, delta_p, delta`; `rho_ss` is
/// zero for the three-level system.
pub fn write_trajectory<W: Write + ?Sized>(
    w: &mut W,
    traj: &TrajectoryResult<f64>,
) -> std::io::Result<()> {
    writeln!(w, "t,rho_gg,rho_ee,rho_ff,rho_ss,delta_p,delta")?;
    for ((t, pops), ctl) in traj.times.iter().zip(&traj.populations).zip(&traj.controls) {
        let p = |l: Level| pops.get(l.index()).copied().unwrap_or(0.0);
        row(
            w,
            &[
                *t,
                p(Level::G),
                p(Level::E),
                p(Level::F),
                p(Level::S),
                ctl.0,
                ctl.1,
            ],
        )?;
    }
    Ok(())
}

/// Axis columns, then `final_rho_ff, max_rho_ee`, plus `max_rho_ff` for the
/// Raman baseline.
pub fn write_sweep<W: Write + ?Sized>(w: &mut W, result: &SweepResult) -> std::io::Result<()> {
    let raman = result.scenario == Scenario::RamanBaseline;
    let mut header = result.axis_names.clone();
    header.push("final_rho_ff".into());
    header.push("max_rho_ee".into());
    if raman {
        header.push("max_rho_ff".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for p in &result.points {
        let mut values = p.coords.clone();
        values.push(p.final_rho_ff);
        values.push(p.max_rho_ee);
        if raman {
            values.push(p.max_rho_ff);
        }
        row(w, &values)?;
    }
    Ok(())
}

pub fn write_learning_curve<W: Write + ?Sized>(
    w: &mut W,
    curve: &LearningCurve,
) -> std::io::Result<()> {
    writeln!(
        w,
        "epoch,mean_reward,max_reward,baseline,greedy_reward,loss"
    )?;
    for e in &curve.epochs {
        row(
            w,
            &[
                e.epoch as f64,
                e.mean_reward,
                e.max_reward,
                e.baseline,
                e.greedy_reward,
                e.loss,
            ],
        )?;
    }
    Ok(())
}

/// One line per optimizer run: index, score, evaluations, cycles, parameters.
pub fn write_runs<W: Write + ?Sized>(w: &mut W, runs: &[RunSummary<f64>]) -> std::io::Result<()> {
    let n = runs.first().map_or(0, |r| r.params.len());
    let mut header = vec![
        "run".to_string(),
        "score".into(),
        "n_evals".into(),
        "n_iter".into(),
    ];
    header.extend((0..n).map(|i| format!("p{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (i, r) in runs.iter().enumerate() {
        let mut values = vec![i as f64, r.score, r.n_evals as f64, r.n_iter as f64];
        values.extend(&r.params);
        row(w, &values)?;
    }
    Ok(())
}
