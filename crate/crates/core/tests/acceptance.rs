//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and fails if
//! any gated criterion fails. Criterion 11 is a measurement and never gates.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the table.

use std::fs;
use std::io::Write;
use std::time::Instant;

use rand::Rng;

use ica_mlp::cli::{self, BenchmarkTarget, DataSource, OptimizerKind, RunConfig, TrainExtras};
use ica_mlp::dataset::{self, ColumnRange, Subset};
use ica_mlp::ga::{self, GaConfig, GenerationObserver};
use ica_mlp::ica::{self, DecadeObserver, Empire, IcaConfig};
use ica_mlp::metrics::{self, Unit};
use ica_mlp::mlp::{self, MlpTopology};
use ica_mlp::optim::{sphere, Bounds, Country};
use ica_mlp::rng::{substream, Purpose};

const FORWARD_TOL: f64 = 1e-12;
const TANSIG_TOL: f64 = 1e-12;
const METRIC_TOL: f64 = 1e-12;
const ROUNDTRIP_REL_TOL: f64 = 1e-9;
const ICA_SPHERE_TARGET: f64 = 1e-3;
const ICA_SPHERE_MIN_HITS: usize = 95;
const GA_SPHERE_TARGET: f64 = 1e-2;
const GA_SPHERE_MIN_HITS: usize = 90;
const TRAINING_RATIO: f64 = 0.25;

struct Outcome {
    id: u32,
    name: &'static str,
    gated: bool,
    pass: bool,
    detail: String,
    seconds: f64,
}

fn check(id: u32, name: &'static str, gated: bool, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t = Instant::now();
    let (pass, detail) = f();
    let o = Outcome {
        id,
        name,
        gated,
        pass,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    };
    // raw handle so the table survives test output capture
    writeln!(
        std::io::stdout(),
        "[{}] {:>2} {:<34} {} ({:.1}s)",
        match (o.gated, o.pass) {
            (false, _) => "INFO",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        },
        o.id,
        o.name,
        o.detail,
        o.seconds
    )
    .unwrap();
    o
}

fn naive_forward(params: &[f64], sizes: &[usize], x: &[f64]) -> f64 {
    let mut a = x.to_vec();
    let mut k = 0;
    for l in 1..sizes.len() {
        let (fan_in, fan_out) = (sizes[l - 1], sizes[l]);
        let w = &params[k..k + fan_in * fan_out];
        let b = &params[k + fan_in * fan_out..k + fan_in * fan_out + fan_out];
        k += fan_in * fan_out + fan_out;
        let mut next = vec![0.0; fan_out];
        for j in 0..fan_out {
            let mut n = b[j];
            for i in 0..fan_in {
                n += w[j * fan_in + i] * a[i];
            }
            next[j] = if l + 1 == sizes.len() {
                n
            } else {
                2.0 / (1.0 + (-2.0 * n).exp()) - 1.0
            };
        }
        a = next;
    }
    a[0]
}

fn c1_param_count() -> (bool, String) {
    let topo = MlpTopology::default();
    let shapes = topo.layer_shapes();
    let parts: Vec<usize> = shapes
        .iter()
        .flat_map(|&(fan_in, fan_out)| [fan_in * fan_out, fan_out])
        .collect();
    let pass = mlp::param_count(&topo) == 545 && parts == [96, 16, 384, 24, 24, 1];
    (
        pass,
        format!("count={} parts={parts:?}", mlp::param_count(&topo)),
    )
}

fn c2_forward_oracle() -> (bool, String) {
    let topo = MlpTopology::default();
    let sizes = topo.layer_sizes();
    let mut rng = substream(2, Purpose::Baseline, 0, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p: Vec<f64> = (0..545).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = mlp::forward(&p, &topo, &x).unwrap();
        worst = worst.max((got - naive_forward(&p, &sizes, &x)).abs());
    }
    (worst <= FORWARD_TOL, format!("max |diff| = {worst:.3e}"))
}

fn c3_tansig() -> (bool, String) {
    let n = 10_000;
    let mut worst = 0.0f64;
    for i in 0..n {
        let x = -20.0 + 40.0 * i as f64 / (n - 1) as f64;
        worst = worst.max((mlp::tansig(x) - x.tanh()).abs());
    }
    let zero = mlp::tansig(0.0) == 0.0;
    (
        worst <= TANSIG_TOL && zero,
        format!("max |diff| = {worst:.3e}, tansig(0) exact: {zero}"),
    )
}

fn c4_metric_identities() -> (bool, String) {
    let mut rng = substream(4, Purpose::Baseline, 0, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..200);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mse = metrics::mse(&y, &h).unwrap();
        let rmse = metrics::rmse(&y, &h).unwrap();
        let (mean, var) = metrics::error_stats(&y, &h).unwrap();
        worst = worst
            .max((rmse * rmse - mse).abs())
            .max((var + mean * mean - mse).abs());
    }
    let zero = metrics::mse(&[0.3, -1.0, 2.0], &[0.3, -1.0, 2.0]).unwrap() == 0.0;
    (
        worst <= METRIC_TOL && zero,
        format!("max identity gap = {worst:.3e}, mse(y,y)=0: {zero}"),
    )
}

fn c5_normalization() -> (bool, String) {
    let mut rng = substream(5, Purpose::Baseline, 0, 0);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let a = rng.random_range(-1000.0..1000.0);
        let r = ColumnRange {
            min: a,
            max: a + rng.random_range(0.01..500.0),
        };
        let x: f64 = rng.random_range(r.min..r.max);
        let back = r.inverse(r.transform(x));
        worst = worst.max((back - x).abs() / x.abs().max(1e-300));
    }
    let records = dataset::make_synthetic(300, 5, 0.1).unwrap();
    let spec = dataset::fit_normalizer(&records).unwrap();
    let mut endpoints = true;
    for c in 0..7 {
        let col = spec.column(c);
        let vals: Vec<f64> = records.iter().map(|r| r.values()[c]).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        endpoints &= col.transform(lo) == -1.0 && col.transform(hi) == 1.0;
    }
    (
        worst <= ROUNDTRIP_REL_TOL && endpoints,
        format!("max rel err = {worst:.3e}, endpoints exact: {endpoints}"),
    )
}

#[derive(Default)]
struct IcaInvariants {
    countries: usize,
    dim: usize,
    low: f64,
    high: f64,
    violations: Vec<String>,
}

impl IcaInvariants {
    fn all_countries(empires: &[Empire]) -> impl Iterator<Item = &Country> {
        empires
            .iter()
            .flat_map(|e| std::iter::once(&e.imperialist).chain(&e.colonies))
    }
}

impl DecadeObserver for IcaInvariants {
    fn after_swap(&mut self, decade: usize, empires: &[Empire]) {
        for e in empires {
            if e.colonies.iter().any(|c| c.cost < e.imperialist.cost) {
                self.violations
                    .push(format!("decade {decade}: colony better than imperialist"));
            }
        }
    }

    fn end_of_decade(&mut self, decade: usize, empires: &[Empire]) {
        let n = Self::all_countries(empires).count();
        if n != self.countries {
            self.violations.push(format!(
                "decade {decade}: {n} countries, expected {}",
                self.countries
            ));
        }
        for c in Self::all_countries(empires) {
            if c.position.len() != self.dim
                || c.position.iter().any(|&v| v < self.low || v > self.high)
            {
                self.violations
                    .push(format!("decade {decade}: country out of bounds"));
            }
        }
        self.after_swap(decade, empires);
    }
}

fn c6_ica_invariants() -> (bool, String) {
    let mut rng = substream(6, Purpose::Baseline, 0, 0);
    let mut failures = Vec::new();
    for run in 0..50u64 {
        let countries = rng.random_range(20..=100);
        let dim = rng.random_range(2..=10);
        let config = IcaConfig {
            num_countries: countries,
            num_imperialists: rng.random_range(2..=countries / 5),
            num_decades: 40,
            bounds: Bounds::uniform(-2.0, 3.0),
            seed: run,
            ..IcaConfig::default()
        };
        let mut obs = IcaInvariants {
            countries,
            dim,
            low: -2.0,
            high: 3.0,
            ..IcaInvariants::default()
        };
        let shifted = |x: &[f64]| x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>();
        let (_, trace) = ica::run_observed(&config, &shifted, dim, &mut obs).unwrap();
        if trace
            .rows
            .windows(2)
            .any(|w| w[1].best_cost > w[0].best_cost)
        {
            obs.violations.push("best-ever cost increased".into());
        }
        if let Some(v) = obs.violations.first() {
            failures.push(format!("run {run}: {v}"));
        }
    }
    (
        failures.is_empty(),
        match failures.first() {
            None => "50/50 runs clean".into(),
            Some(f) => format!("{} runs violated, first: {f}", failures.len()),
        },
    )
}

fn c7_ica_sphere() -> (bool, String) {
    let mut hits = 0;
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let config = IcaConfig {
            num_countries: 50,
            num_imperialists: 5,
            num_decades: 100,
            bounds: Bounds::uniform(-5.0, 5.0),
            seed,
            ..IcaConfig::default()
        };
        let (best, _) = ica::run(&config, &|x: &[f64]| sphere(x), 2).unwrap();
        worst = worst.max(best.cost);
        if best.cost < ICA_SPHERE_TARGET {
            hits += 1;
        }
    }
    (
        hits >= ICA_SPHERE_MIN_HITS,
        format!("{hits}/100 seeds below {ICA_SPHERE_TARGET:e} (worst {worst:.3e})"),
    )
}

struct GaInvariants {
    size: usize,
    last_best: f64,
    violations: usize,
}

impl GenerationObserver for GaInvariants {
    fn end_of_generation(&mut self, _generation: usize, population: &[Country]) {
        let best = population
            .iter()
            .map(|c| c.cost)
            .fold(f64::INFINITY, f64::min);
        if population.len() != self.size || best > self.last_best {
            self.violations += 1;
        }
        self.last_best = best;
    }
}

fn c8_ga() -> (bool, String) {
    let mut hits = 0;
    let mut violations = 0;
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let config = GaConfig {
            population_size: 50,
            num_generations: 100,
            bounds: Bounds::uniform(-5.0, 5.0),
            seed,
            ..GaConfig::default()
        };
        let mut obs = GaInvariants {
            size: 50,
            last_best: f64::INFINITY,
            violations: 0,
        };
        let (best, _) = ga::run_observed(&config, &|x: &[f64]| sphere(x), 2, &mut obs).unwrap();
        violations += obs.violations;
        worst = worst.max(best.cost);
        if best.cost < GA_SPHERE_TARGET {
            hits += 1;
        }
    }
    (
        hits >= GA_SPHERE_MIN_HITS && violations == 0,
        format!(
            "{hits}/100 seeds below {GA_SPHERE_TARGET:e} (worst {worst:.3e}), invariant violations {violations}"
        ),
    )
}

fn desk_config(pairs: &[(&str, &str)]) -> RunConfig {
    let layer = pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    RunConfig::resolve(&[layer]).unwrap()
}

fn c9_determinism() -> (bool, String) {
    let config = desk_config(&[
        ("data.synthetic.rows", "500"),
        ("ica.countries", "100"),
        ("ica.imperialists", "10"),
        ("ica.decades", "50"),
        ("seed", "9"),
        ("threads", "1"),
    ]);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cli::cmd_train(&config, &a, TrainExtras::default()).unwrap();
    cli::cmd_train(&config, &b, TrainExtras::default()).unwrap();
    let mut differing = Vec::new();
    for name in [
        cli::TRACE_FILE,
        cli::TRAIN_REPORT_FILE,
        cli::TEST_REPORT_FILE,
        cli::MODEL_FILE,
        cli::NORMALIZATION_FILE,
        cli::CONFIG_FILE,
    ] {
        if fs::read(a.join(name)).unwrap() != fs::read(b.join(name)).unwrap() {
            differing.push(name);
        }
    }
    (
        differing.is_empty(),
        if differing.is_empty() {
            "all artifacts byte-identical".into()
        } else {
            format!("differing: {differing:?}")
        },
    )
}

fn c10_training() -> (bool, String) {
    let config = desk_config(&[
        ("data.synthetic.rows", "1000"),
        ("data.synthetic.noise_sd", "0.1"),
        ("ica.countries", "200"),
        ("ica.imperialists", "20"),
        ("ica.decades", "100"),
        ("seed", "10"),
    ]);
    assert!(matches!(
        config.data,
        DataSource::Synthetic { rows: 1000, .. }
    ));
    let (outcome, _) = cli::train(&config).unwrap();
    let trained = metrics::evaluate(
        outcome.model.params.as_slice(),
        &config.topology,
        &outcome.dataset,
        Subset::Test,
        Unit::Normalized,
    )
    .unwrap()
    .mse;
    let mut rng = substream(10, Purpose::Baseline, 0, 0);
    let n = config.topology.param_count();
    let mut total = 0.0;
    for _ in 0..100 {
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        total += metrics::evaluate(
            &p,
            &config.topology,
            &outcome.dataset,
            Subset::Test,
            Unit::Normalized,
        )
        .unwrap()
        .mse;
    }
    let baseline = total / 100.0;
    let ratio = trained / baseline;
    (
        ratio < TRAINING_RATIO,
        format!("test MSE {trained:.4} vs random mean {baseline:.4} (ratio {ratio:.4})"),
    )
}

fn c11_ica_vs_ga() -> (bool, String) {
    let config = desk_config(&[
        ("data.synthetic.rows", "1000"),
        ("data.synthetic.noise_sd", "0.1"),
        ("ica.countries", "200"),
        ("ica.imperialists", "20"),
        ("ica.decades", "100"),
        ("ga.population", "200"),
        ("ga.generations", "100"),
        ("seed", "11"),
    ]);
    let (report, _, _) = cli::benchmark(
        &config,
        BenchmarkTarget::Dataset,
        OptimizerKind::Ica,
        OptimizerKind::Ga,
        20,
    )
    .unwrap();
    let mean = |f: &dyn Fn(&cli::PairResult) -> f64| {
        report.pairs.iter().map(f).sum::<f64>() / report.pairs.len() as f64
    };
    (
        true,
        format!(
            "ICA <= GA test MSE in {:.0}% of 20 pairs (mean ICA {:.4}, GA {:.4})",
            100.0 * report.left_not_worse_fraction,
            mean(&|p| p.left.score),
            mean(&|p| p.right.score)
        ),
    )
}

#[test]
fn acceptance() {
    let outcomes = vec![
        check(1, "parameter accounting", true, c1_param_count),
        check(2, "forward pass oracle", true, c2_forward_oracle),
        check(3, "tansig equals tanh", true, c3_tansig),
        check(4, "metric identities", true, c4_metric_identities),
        check(5, "normalization round trip", true, c5_normalization),
        check(6, "ICA structural invariants", true, c6_ica_invariants),
        check(7, "ICA sphere optimization", true, c7_ica_sphere),
        check(8, "GA invariants and sphere", true, c8_ga),
        check(9, "end-to-end determinism", true, c9_determinism),
        check(10, "desk-scale training", true, c10_training),
        check(11, "ICA vs GA paired seeds", false, c11_ica_vs_ga),
    ];
    let failed: Vec<u32> = outcomes
        .iter()
        .filter(|o| o.gated && !o.pass)
        .map(|o| o.id)
        .collect();
    writeln!(
        std::io::stdout(),
        "acceptance: {}/{} gated criteria passed",
        outcomes.iter().filter(|o| o.gated && o.pass).count(),
        outcomes.iter().filter(|o| o.gated).count()
    )
    .unwrap();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
