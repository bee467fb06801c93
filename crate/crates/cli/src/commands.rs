//! The four experiment commands. Each returns the CSV text it produced.

use std::fmt::Write as _;

use langevin_mh::harness::{
    coarse_increment, coarse_ou_integral, generate_brownian_grid, invariance_check, reference_trajectory,
    rejection_rate_study, strong_error_study, BrownianIncrementGrid, ConvergenceStudyConfig, EquilibriumSampler,
    Method, OrderFit, ReferenceOutcome, RejectionStudyConfig, StudyModel, StudyState,
};
use langevin_mh::harness::exact_steps;
use langevin_mh::inertial::inertial_step;
use langevin_mh::overdamped::{overdamped_step, OverdampedStepInput};
use langevin_mh::{ChainOptions, Error as CoreError, RngStreamSpec, StreamRole};

use crate::config::{Command, ExperimentConfig};
use crate::error::{CliError, CliResult};

/// Fine steps per coarse step for trajectory references.
const TRAJECTORY_FINE_RATIO: usize = 64;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn slope_footer(out: &mut String, fit: Option<OrderFit>) {
    match fit {
        Some(f) => writeln!(out, "slope,{},{}", num(f.slope), num(f.half_width)).unwrap(),
        None => writeln!(out, "slope,NaN,NaN").unwrap(),
    }
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<String> {
    match cfg.command {
        Command::Trajectory => cmd_trajectory(cfg),
        Command::Converge => cmd_converge(cfg),
        Command::Ergodicity => cmd_ergodicity(cfg),
        Command::RejectRate => cmd_reject_rate(cfg),
    }
}

/// One chain state per method column; `None` after a blow-up.
struct Lane {
    method: Method,
    state: Option<StudyState>,
    coins: langevin_mh::RandomStream,
}

/// One realization: a fine reference and every requested method, all driven
/// by the same Brownian path.
pub fn cmd_trajectory(cfg: &ExperimentConfig) -> CliResult<String> {
    let h = cfg.require_h()?;
    let n = cfg.require_n_steps()?;
    let ratio = cfg.fine_ratio.unwrap_or(TRAJECTORY_FINE_RATIO);
    if ratio == 0 || (cfg.model.is_inertial() && ratio % 2 != 0) {
        return Err(CliError::config("fine_ratio must be positive, and even for inertial methods"));
    }
    let hf = h / ratio as f64;
    let horizon = n as f64 * h;
    let spec = RngStreamSpec::new(cfg.seed, 0, StreamRole::Brownian);
    let grid = if cfg.zero_noise {
        BrownianIncrementGrid::zeros(horizon, hf, 1)?
    } else {
        generate_brownian_grid(horizon, hf, 1, spec)?
    };
    let start = cfg.fixed_start()?.clone();
    let guard = ChainOptions::default().guard;

    let mut lanes: Vec<Lane> = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(j, &method)| Lane {
            method,
            state: Some(start.clone()),
            coins: spec.with_role(StreamRole::MetropolisUniform { lane: j as u32 }).open(),
        })
        .collect();
    let mut reference = Some(start.clone());

    let mut out = String::new();
    writeln!(out, "{}", cfg.header()).unwrap();
    let inertial = cfg.model.is_inertial();
    let mut cols = vec!["step".to_string(), "t".to_string()];
    if inertial {
        cols.extend(["reference_q".into(), "reference_p".into()]);
    } else {
        cols.push("reference".into());
    }
    for l in &lanes {
        if inertial {
            cols.extend([format!("{}_q", l.method), format!("{}_p", l.method)]);
        } else {
            cols.push(l.method.to_string());
        }
        cols.push(format!("{}_accepted", l.method));
    }
    writeln!(out, "{}", cols.join(",")).unwrap();

    let cells = |s: &Option<StudyState>, marker: bool| -> Vec<String> {
        let width = if inertial { 2 } else { 1 };
        match s {
            Some(StudyState::Phase(p)) => vec![num(p.q[0]), num(p.p[0])],
            Some(StudyState::Overdamped(o)) => vec![num(o.x[0])],
            None if marker => vec!["blowup".to_string(); width],
            None => vec![String::new(); width],
        }
    };
    let mut row = vec!["0".to_string(), num(0.0)];
    row.extend(cells(&reference, true));
    for l in &lanes {
        row.extend(cells(&l.state, true));
        row.push(String::new());
    }
    writeln!(out, "{}", row.join(",")).unwrap();

    let mut segment = vec![0.0; ratio];
    for k in 0..n {
        if let Some(r) = &reference {
            for (i, v) in segment.iter_mut().enumerate() {
                *v = grid.row(k * ratio + i)[0];
            }
            let seg = BrownianIncrementGrid::from_increments(h, hf, 1, segment.clone())?;
            reference = match reference_trajectory(&cfg.model, &seg, r)? {
                ReferenceOutcome::Terminal(s) => Some(s),
                ReferenceOutcome::BlowUp(b) => {
                    eprintln!("reference: blow-up at step {} (|x| = {:e})", k + 1, b.magnitude);
                    None
                }
            };
        }
        let mut row = vec![(k + 1).to_string(), num((k + 1) as f64 * h)];
        row.extend(cells(&reference, true));
        for lane in lanes.iter_mut() {
            let accepted = match lane.state.take() {
                None => None,
                Some(state) => match coupled_step(cfg, &grid, lane, &state, h, k)? {
                    Some((next, accepted)) if exceeds(&next, guard).is_none() => {
                        lane.state = Some(next);
                        Some(accepted)
                    }
                    other => {
                        let magnitude = other.and_then(|(s, _)| exceeds(&s, guard)).unwrap_or(f64::INFINITY);
                        eprintln!("{}: blow-up at step {} (|x| = {magnitude:e})", lane.method, k + 1);
                        None
                    }
                },
            };
            row.extend(cells(&lane.state, true));
            row.push(accepted.map_or(String::new(), |a| (a as u8).to_string()));
        }
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    Ok(out)
}

fn exceeds(s: &StudyState, guard: f64) -> Option<f64> {
    let (a, b): (&[f64], &[f64]) = match s {
        StudyState::Overdamped(o) => (&o.x, &[]),
        StudyState::Phase(p) => (&p.q, &p.p),
    };
    let m = a.iter().chain(b).fold(0.0_f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
    (m.is_nan() || m > guard).then_some(m)
}

/// Step `k` of one method lane on coarse increments of `grid`. `None` marks a
/// non-finite update.
fn coupled_step(
    cfg: &ExperimentConfig,
    grid: &BrownianIncrementGrid,
    lane: &mut Lane,
    state: &StudyState,
    h: f64,
    k: usize,
) -> CliResult<Option<(StudyState, bool)>> {
    let zeta = lane.method.is_metropolized().then(|| lane.coins.uniform());
    match (&cfg.model, state) {
        (StudyModel::Overdamped(m), StudyState::Overdamped(s)) => {
            let dw = coarse_increment(grid, h, k)?;
            let method = lane.method.overdamped().expect("validated");
            match overdamped_step(m, method, OverdampedStepInput { state: s, h, dw: &dw, zeta }) {
                Ok(o) => Ok(Some((StudyState::Overdamped(o.state), o.accepted))),
                Err(CoreError::NonFinite(_)) => Ok(None),
                Err(e) => Err(e.into()),
            }
        }
        (StudyModel::Inertial(m), StudyState::Phase(s)) => {
            let t = k as f64 * h;
            let xi1 = coarse_ou_integral(grid, m, t, t + 0.5 * h)?;
            let xi2 = coarse_ou_integral(grid, m, t + 0.5 * h, t + h)?;
            let method = lane.method.inertial().expect("validated");
            let o = inertial_step(m, method, s, h, &xi1, &xi2, zeta)?;
            Ok(Some((StudyState::Phase(o.state), o.accepted)))
        }
        _ => Err(CliError::config("start state does not match the model")),
    }
}

/// Default `fine_ratio`: `h_fine` is the smallest step divided by 64.
fn default_fine_ratio(hs: &[f64]) -> CliResult<usize> {
    let (coarse, fine) = (hs[0], hs[hs.len() - 1]);
    exact_steps(64.0 * coarse, fine)
        .filter(|r| r.is_power_of_two())
        .ok_or_else(|| CliError::config("step sizes must be power-of-two multiples of the smallest step"))
}

pub fn cmd_converge(cfg: &ExperimentConfig) -> CliResult<String> {
    let fine_ratio = match cfg.fine_ratio {
        Some(r) => r,
        None => default_fine_ratio(&cfg.step_sizes)?,
    };
    let study = ConvergenceStudyConfig {
        model: cfg.model.clone(),
        method: cfg.method(),
        horizon: cfg.require_horizon()?,
        step_sizes: cfg.step_sizes.clone(),
        fine_ratio,
        realizations: cfg.realizations,
        initial: cfg.initial_policy(),
        energy_bound: cfg.energy_bound,
        seed: cfg.seed,
        threads: cfg.threads,
    };
    study.validate()?;
    let report = strong_error_study(&study)?;
    for d in &report.discarded {
        eprintln!("discarded realization {}: {:?}", d.realization, d.reason);
    }
    let mut out = String::new();
    writeln!(out, "{}", cfg.header()).unwrap();
    writeln!(out, "h,rms,stderr").unwrap();
    for j in 0..report.step_sizes.len() {
        writeln!(out, "{},{},{}", num(report.step_sizes[j]), num(report.rms[j]), num(report.stderr[j])).unwrap();
    }
    writeln!(out, "# discarded {} of {}", report.discarded.len(), report.realizations).unwrap();
    slope_footer(&mut out, report.fit);
    Ok(out)
}

fn normal_pdf(x: f64, sd: f64) -> f64 {
    (-0.5 * (x / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

pub fn cmd_ergodicity(cfg: &ExperimentConfig) -> CliResult<String> {
    let h = cfg.require_h()?;
    let n = cfg.require_n_steps()?;
    let spec = RngStreamSpec::new(cfg.seed, 0, StreamRole::Brownian);
    let report = invariance_check(&cfg.model, cfg.method(), h, n, cfg.fixed_start()?, spec)?;
    if let Some(b) = report.blow_up {
        return Err(CliError::Numeric(format!(
            "{} chain blew up at step {} (|x| = {:e})",
            cfg.method(),
            b.step + 1,
            b.magnitude
        )));
    }
    let sampler = EquilibriumSampler::new(cfg.model.potential())?;
    let mut out = String::new();
    writeln!(out, "{}", cfg.header()).unwrap();
    writeln!(out, "marginal,bin_lo,bin_hi,count,density,target_density").unwrap();
    for m in &report.marginals {
        let lo = m.samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = m.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let width = (hi - lo) / cfg.bins as f64;
        let mut counts = vec![0usize; cfg.bins];
        for &x in &m.samples {
            counts[(((x - lo) / width) as usize).min(cfg.bins - 1)] += 1;
        }
        let target = |x: f64| match &cfg.model {
            StudyModel::Inertial(im) if m.name.starts_with('p') => {
                let i: usize = m.name[1..].parse().unwrap_or(0);
                normal_pdf(x, (im.mass()[i] / im.beta()).sqrt())
            }
            _ => sampler.pdf(x),
        };
        for (b, &c) in counts.iter().enumerate() {
            let a = lo + b as f64 * width;
            let density = c as f64 / (m.samples.len() as f64 * width);
            writeln!(out, "{},{},{},{},{},{}", m.name, num(a), num(a + width), c, num(density), num(target(a + 0.5 * width)))
                .unwrap();
        }
    }
    writeln!(out, "accepted_fraction,{}", num(report.accepted_fraction)).unwrap();
    for m in &report.marginals {
        writeln!(out, "ks,{},{}", m.name, num(m.ks)).unwrap();
    }
    Ok(out)
}

pub fn cmd_reject_rate(cfg: &ExperimentConfig) -> CliResult<String> {
    let study = RejectionStudyConfig {
        model: cfg.model.clone(),
        method: cfg.method(),
        step_sizes: cfg.step_sizes.clone(),
        n_steps: cfg.require_n_steps()?,
        realizations: cfg.realizations,
        initial: cfg.initial_policy(),
        seed: cfg.seed,
        threads: cfg.threads,
    };
    let report = rejection_rate_study(&study)?;
    let mut out = String::new();
    writeln!(out, "{}", cfg.header()).unwrap();
    writeln!(out, "h,mean_rejection,stderr").unwrap();
    for j in 0..report.step_sizes.len() {
        writeln!(
            out,
            "{},{},{}",
            num(report.step_sizes[j]),
            num(report.mean_rejection[j]),
            num(report.stderr[j])
        )
        .unwrap();
    }
    slope_footer(&mut out, report.fit);
    Ok(out)
}
