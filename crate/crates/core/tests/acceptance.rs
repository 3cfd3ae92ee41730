//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use pmp_core::congestion::{classify_scaling, global_monotone, MonotoneVerdict, ScalingGrid, ScalingTolerance, ScalingVerdict};
use pmp_core::duopoly::{CurveRow, ResponseMode};
use pmp_core::monopoly::{
    local_improvement_probe, maximize_single_price, partition_comparison, perturb_lower_cutoff, ratio_sweep, Objective,
    COMPARISON_GRID,
};
use pmp_core::{CongestionModel, DuopolyScenario, MarketScenario, PmpError, ProviderStrategy, TypeDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { pass: true, detail: Vec::new() }
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        let msg = msg.into();
        self.detail.push(format!("{} {msg}", if ok { "ok  " } else { "FAIL" }));
        self.pass &= ok;
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn market(v: f64, caps: Vec<f64>, model: CongestionModel) -> MarketScenario {
    MarketScenario::new(v, caps, model, TypeDistribution::default()).expect("valid scenario")
}

fn a_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

fn monopoly_closed_forms() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    let sc = market(2.0, vec![1.0], CongestionModel::Utilization);
    let profit = maximize_single_price(&sc, Objective::Profit).unwrap();
    let welfare = maximize_single_price(&sc, Objective::Welfare).unwrap();
    let elapsed = start.elapsed();
    let target = 4.0 * 6f64.sqrt() / 9.0;
    out.check((profit.value - target).abs() <= 1e-4, format!("max profit {:.9} vs {target:.9}", profit.value));
    out.check((profit.prices[0] - 4.0 / 3.0).abs() <= 1e-4, format!("argmax price {:.9}", profit.prices[0]));
    out.check((welfare.value - 1.5).abs() <= 1e-6, format!("max welfare {:.9}", welfare.value));
    out.check(elapsed < Duration::from_secs(1), format!("runtime {elapsed:?}"));
    out
}

fn partition_closed_forms() -> Outcome {
    let mut out = Outcome::new();
    let base = market(2.0, vec![1.0], CongestionModel::Latency);
    let c = partition_comparison(&base, 1.0, &[0.5, 0.5]).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6;
    out.check(
        close(c.single.welfare, 0.75) && close(c.single.profit, 0.5),
        format!("single (S, pi) = ({:.9}, {:.9})", c.single.welfare, c.single.profit),
    );
    out.check(
        close(c.partitioned.welfare, 0.5) && close(c.partitioned.profit, 1.0 / 3.0),
        format!("partitioned (S, pi) = ({:.9}, {:.9})", c.partitioned.welfare, c.partitioned.profit),
    );
    let (mut held, mut failed) = (0, Vec::new());
    for p in linspace(0.0, 2.0, COMPARISON_GRID) {
        match partition_comparison(&base, p, &[0.5, 0.5]) {
            Ok(c) => {
                if c.single.welfare >= c.partitioned.welfare - 1e-9 && c.single.profit >= c.partitioned.profit - 1e-9 {
                    held += 1;
                } else {
                    failed.push(p);
                }
            }
            Err(e) => {
                out.detail.push(format!("     p = {p}: {e}"));
                failed.push(p);
            }
        }
    }
    out.check(
        held == COMPARISON_GRID,
        format!("multiplexing dominates at {held}/{COMPARISON_GRID} grid prices (failures {failed:?})"),
    );
    out
}

fn indifference() -> Outcome {
    let mut out = Outcome::new();
    for model in [CongestionModel::Utilization, CongestionModel::loss(2).unwrap()] {
        let base = market(2.0, vec![1.0], model);
        for split in [[0.5, 0.5], [0.3, 0.7]] {
            let mut worst: f64 = 0.0;
            let mut errors = 0;
            for p in linspace(0.0, 2.0, COMPARISON_GRID) {
                match partition_comparison(&base, p, &split) {
                    Ok(c) => {
                        worst = worst
                            .max((c.single.welfare - c.partitioned.welfare).abs())
                            .max((c.single.profit - c.partitioned.profit).abs());
                    }
                    Err(_) => errors += 1,
                }
            }
            out.check(
                worst <= 1e-8 && errors == 0,
                format!("{model} split {split:?}: max |diff| {worst:.3e}, errors {errors}"),
            );
        }
    }
    out
}

fn two_class_vs_single(model: CongestionModel, objective: Objective) -> (f64, f64) {
    let sc = market(2.0, vec![0.3, 0.7], model);
    let curve = ratio_sweep(&sc, &[1.0], objective).unwrap();
    (curve.points[0].best_value, curve.baseline_single)
}

fn identical_price_signs() -> Outcome {
    let mut out = Outcome::new();
    for objective in [Objective::Profit, Objective::Welfare] {
        let (two, single) = two_class_vs_single(CongestionModel::Latency, objective);
        out.check(two < single - 1e-4, format!("latency {objective}: two-class {two:.9} < single {single:.9}"));
    }
    for objective in [Objective::Profit, Objective::Welfare] {
        let (two, single) = two_class_vs_single(CongestionModel::outage(0.5).unwrap(), objective);
        out.check(two > single + 1e-4, format!("outage {objective}: two-class {two:.9} > single {single:.9}"));
    }
    out
}

fn ratio_sweeps() -> Outcome {
    let mut out = Outcome::new();
    let services = [
        (CongestionModel::Utilization, true),
        (CongestionModel::loss(2).unwrap(), true),
        (CongestionModel::outage(0.5).unwrap(), true),
        (CongestionModel::Latency, false),
    ];
    for (model, expect_gain) in services {
        let start = Instant::now();
        let sc = market(2.0, vec![0.3, 0.7], model);
        let curve = ratio_sweep(&sc, &a_grid(), Objective::Profit).unwrap();
        let elapsed = start.elapsed();
        let best_below_one = curve
            .points
            .iter()
            .filter(|p| p.a < 1.0)
            .max_by(|x, y| x.best_value.total_cmp(&y.best_value))
            .unwrap();
        let max = curve.max_value().unwrap();
        if expect_gain {
            out.check(
                best_below_one.best_value > curve.baseline_single + 1e-4,
                format!(
                    "{model}: best two-class {:.9} at a = {} vs single {:.9}",
                    best_below_one.best_value, best_below_one.a, curve.baseline_single
                ),
            );
        } else {
            out.check(
                max <= curve.baseline_single + 1e-6,
                format!("{model}: max two-class {max:.9} <= single {:.9}", curve.baseline_single),
            );
        }
        out.check(elapsed < Duration::from_secs(60), format!("{model} runtime {elapsed:?}"));
    }
    out
}

fn probe() -> Outcome {
    let mut out = Outcome::new();
    let sc = market(2.0, vec![0.3, 0.7], CongestionModel::Utilization);
    match local_improvement_probe(&sc, 0.9, 1e-3) {
        Ok(r) => {
            out.check(
                r.d_welfare > 0.0 && r.d_profit > 0.0,
                format!("step {:+e}: dS = {:.3e}, dpi = {:.3e} ({:?})", r.direction * r.delta, r.d_welfare, r.d_profit, r.case),
            );
            let back = perturb_lower_cutoff(&sc, 0.9, -r.direction * 1e-3).unwrap();
            out.check(back.d_welfare < 0.0, format!("reverse step: dS = {:.3e}", back.d_welfare));
        }
        Err(e) => out.check(false, format!("probe failed: {e}")),
    }
    out
}

fn classifier_verdicts() -> Outcome {
    let mut out = Outcome::new();
    let grid = ScalingGrid::standard();
    let tol = ScalingTolerance::default();
    let expected = [
        (CongestionModel::Utilization, ScalingVerdict::Indifferent),
        (CongestionModel::Latency, ScalingVerdict::MultiplexingPreferred),
        (CongestionModel::general_latency(0.5).unwrap(), ScalingVerdict::MultiplexingPreferred),
        (CongestionModel::general_latency(1.0).unwrap(), ScalingVerdict::MultiplexingPreferred),
        (CongestionModel::general_latency(2.0).unwrap(), ScalingVerdict::MultiplexingPreferred),
        (CongestionModel::loss(2).unwrap(), ScalingVerdict::Indifferent),
        (CongestionModel::outage(0.5).unwrap(), ScalingVerdict::PartitionPreferred),
        (CongestionModel::utilization_default(0.1).unwrap(), ScalingVerdict::PartitionPreferred),
        (CongestionModel::utilization_default(0.2).unwrap(), ScalingVerdict::PartitionPreferred),
    ];
    for (model, want) in expected {
        match classify_scaling(&model, &grid, tol) {
            Ok(c) => out.check(
                c.verdict == want,
                format!(
                    "{model}: {} (expected {want}; partition witness {:?}, multiplexing witness {:?})",
                    c.verdict, c.partition_witness, c.multiplexing_witness
                ),
            ),
            Err(e) => out.check(false, format!("{model}: {e}")),
        }
    }
    let g = global_monotone(&CongestionModel::Latency, &[0.3, 0.7], vec![vec![0.2, 0.5], vec![0.05, 0.5]]).unwrap();
    out.check(
        g.verdict == MonotoneVerdict::Violated,
        format!("latency monotone: {} (witnesses {:?})", g.verdict, g.witnesses),
    );
    out
}

fn bijection_roundtrip() -> Outcome {
    let mut out = Outcome::new();
    let models = [
        CongestionModel::Utilization,
        CongestionModel::Latency,
        CongestionModel::general_latency(0.5).unwrap(),
        CongestionModel::general_latency(2.0).unwrap(),
        CongestionModel::loss(2).unwrap(),
        CongestionModel::loss(5).unwrap(),
        CongestionModel::outage(0.5).unwrap(),
        CongestionModel::utilization_default(0.1).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let (mut accepted, mut attempts, mut worst) = (0, 0, 0.0f64);
    let mut failures = Vec::new();
    while accepted < 200 && attempts < 100_000 {
        attempts += 1;
        let model = models[accepted % models.len()];
        let m = rng.gen_range(1..=3);
        let caps: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.5)).collect();
        let value = rng.gen_range(1.0..4.0);
        let sc = market(value, caps, model);
        let mut theta: Vec<f64> = (0..m).map(|_| rng.gen_range(0.02..0.95)).collect();
        theta.sort_by(|a, b| b.total_cmp(a));
        if theta.windows(2).any(|w| w[0] - w[1] < 0.02) {
            continue;
        }
        let Ok(forward) = sc.prices_from_cutoffs(&theta) else { continue };
        if forward.prices.iter().any(|&p| p < 0.0) || forward.saturated {
            continue;
        }
        accepted += 1;
        match sc.cutoffs_from_prices(&forward.prices).and_then(|eq| sc.prices_from_cutoffs(&eq.cutoffs)) {
            Ok(back) => {
                let err = forward.prices.iter().zip(&back.prices).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                worst = worst.max(err);
                if err > 1e-8 {
                    failures.push(format!("{model} {:?} err {err:.3e}", forward.prices));
                }
            }
            Err(e) => failures.push(format!("{model} {:?}: {e}", forward.prices)),
        }
    }
    out.check(accepted == 200, format!("{accepted} scenarios sampled in {attempts} attempts"));
    out.check(failures.is_empty(), format!("max |p - p'| = {worst:.3e}; failures {failures:?}"));
    out
}

fn duopoly_hand_solved() -> Outcome {
    let mut out = Outcome::new();
    let d = DuopolyScenario::new(2.0, CongestionModel::Utilization, TypeDistribution::default(), 1.0, 1.0).unwrap();
    let me = d
        .market_equilibrium(&ProviderStrategy::one_class(1.2, 1.0), &ProviderStrategy::one_class(1.0, 1.0))
        .unwrap();
    let theta2 = (1.0 + 2.6f64.sqrt()) / 4.0;
    out.check((me.equilibrium.cutoffs[1] - theta2).abs() <= 1e-5, format!("theta_2 = {:.9}", me.equilibrium.cutoffs[1]));
    out.check((me.profit_i - 0.416264).abs() <= 1e-5, format!("pi_I = {:.9}", me.profit_i));
    out.check((me.profit_ii - 0.653113).abs() <= 1e-5, format!("pi_II = {:.9}", me.profit_ii));
    out
}

fn curve(model: CongestionModel, v: f64, c: f64) -> Vec<CurveRow> {
    let d = DuopolyScenario::new(v, model, TypeDistribution::default(), c, c).unwrap();
    let grid: Vec<f64> = (0..=20).map(|i| v * i as f64 / 20.0).collect();
    d.duopoly_curve(&grid, &[ResponseMode::OneClass, ResponseMode::TwoClass])
}

fn duopoly_dominance() -> Outcome {
    let mut out = Outcome::new();
    let start = Instant::now();
    let scenarios = [
        ("utilization V=2 C=1", CongestionModel::Utilization, 2.0, 1.0, false),
        ("utilization_default(0.1) V=2 C=1", CongestionModel::utilization_default(0.1).unwrap(), 2.0, 1.0, true),
        ("utilization_default(0.2) V=2 C=1", CongestionModel::utilization_default(0.2).unwrap(), 2.0, 1.0, true),
        ("utilization V=3 C=2", CongestionModel::Utilization, 3.0, 2.0, false),
    ];
    let mut provider_gap = Vec::new();
    for (name, model, v, c, strict) in scenarios {
        let rows = curve(model, v, c);
        let gaps: Vec<Option<f64>> = rows.iter().map(|r| Some(r.profit_ii_two? - r.profit_ii_one?)).collect();
        let missing = gaps.iter().filter(|g| g.is_none()).count();
        let dominated = gaps.iter().flatten().all(|&g| g >= -1e-9);
        let positive = gaps.iter().flatten().filter(|&&g| g > 1e-9).count();
        let max_gap = gaps.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        out.check(
            dominated && missing == 0,
            format!("{name}: two-class >= one-class at all {} points (missing {missing}, max 2-vs-1 gap {max_gap:.6})", rows.len()),
        );
        if strict {
            out.check(
                positive as f64 >= 0.9 * rows.len() as f64,
                format!("{name}: strictly positive gap at {positive}/{} points", rows.len()),
            );
        }
        let spread = rows
            .iter()
            .filter_map(|r| Some(r.profit_ii_two? - r.profit_i?))
            .fold(f64::NEG_INFINITY, f64::max);
        provider_gap.push(spread);
    }
    out.check(
        provider_gap[3] > provider_gap[0],
        format!(
            "max provider profit gap piII - piI: V=3 {:.6} > V=2 {:.6}",
            provider_gap[3], provider_gap[0]
        ),
    );
    let elapsed = start.elapsed();
    out.check(elapsed < Duration::from_secs(300), format!("runtime {elapsed:?}"));
    out
}

fn nash_verification() -> Outcome {
    let mut out = Outcome::new();
    let cases = [
        ("utilization V=2", CongestionModel::Utilization, 2.0, 1.0, ResponseMode::OneClass),
        ("utilization V=2", CongestionModel::Utilization, 2.0, 1.0, ResponseMode::TwoClass),
        ("latency V=2", CongestionModel::Latency, 2.0, 1.0, ResponseMode::OneClass),
        ("utilization_default(0.1) V=2", CongestionModel::utilization_default(0.1).unwrap(), 2.0, 1.0, ResponseMode::OneClass),
        ("utilization_default(0.1) V=2", CongestionModel::utilization_default(0.1).unwrap(), 2.0, 1.0, ResponseMode::TwoClass),
        ("utilization V=3", CongestionModel::Utilization, 3.0, 2.0, ResponseMode::OneClass),
    ];
    for (name, model, v, c, mode) in cases {
        let d = DuopolyScenario::new(v, model, TypeDistribution::default(), c, c).unwrap();
        match d.find_nash(mode) {
            Ok(n) => out.check(
                n.verified,
                format!(
                    "{name} {mode}: converged in {} rounds, pI = {:.6}, II = {:?}, verified = {}",
                    n.rounds, n.price_i, n.strategy_ii.classes, n.verified
                ),
            ),
            Err(PmpError::NoConvergence { rounds, trajectory }) => out.check(
                !trajectory.is_empty(),
                format!(
                    "{name} {mode}: reported non-convergence after {rounds} rounds, last state {:?}",
                    trajectory.last()
                ),
            ),
            Err(e) => out.check(false, format!("{name} {mode}: {e}")),
        }
    }
    out
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("monopoly closed forms", monopoly_closed_forms),
        ("partition comparison closed forms", partition_closed_forms),
        ("indifference equality", indifference),
        ("two-class vs single signs at a = 1", identical_price_signs),
        ("ratio sweep profit gains", ratio_sweeps),
        ("differentiated-pricing probe", probe),
        ("classifier verdicts", classifier_verdicts),
        ("price/cutoff bijection roundtrip", bijection_roundtrip),
        ("duopoly hand-solved market", duopoly_hand_solved),
        ("duopoly dominance curves", duopoly_dominance),
        ("Nash verification", nash_verification),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{status} AC{:02} {name} ({:.2?})", i + 1, start.elapsed());
        for line in &outcome.detail {
            println!("       {line}");
        }
        failed += usize::from(!outcome.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
