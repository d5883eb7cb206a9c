//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Run with
//! `cargo test -p hedgefee-tests --test acceptance [-- <criterion numbers>]`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hedgefee::closed_form::{fee_physical_closed, fee_trs_closed, riccati_theta, TrsCoefficients};
use hedgefee::hjb::{extract_control, solve_fee_surface, FeeSurface};
use hedgefee::market::terminal_fee;
use hedgefee::sim::{sign_changes, simulate_path, solve_contract, SimConfig, SimPath};
use hedgefee::{ContractFamily, ContractSpec, GridSpec, MarketParams};
use hedgefee_cli::config::{ContractEntry, ExperimentConfig, SweepConfig};
use hedgefee_cli::run::{self, reproduce_all};

/// PDE against the closed forms on the baseline grid.
const CLOSED_FORM_TOL: f64 = 1e-3;
/// Wall clock per baseline solve.
const SOLVE_BUDGET: Duration = Duration::from_secs(30);
/// Four-contract fee table.
const FEE_TABLE_TOL: f64 = 2e-3;
/// Regulatory p-sweep.
const REGULATORY_TOL: f64 = 2e-3;
/// TWAP fees.
const TWAP_TOL: f64 = 1e-3;
/// Sensitivity rows.
const SENSITIVITY_TOL: f64 = 5e-3;
/// Expected payoffs, in standard errors.
const STATARB_SIGMAS: f64 = 3.0;
const STATARB_PATHS: usize = 100_000;
const STATARB_BUDGET: Duration = Duration::from_secs(300);
/// Finite-difference residual of the coefficient ODEs.
const ODE_RESIDUAL_TOL: f64 = 1e-6;
/// Fee change when every spacing is halved.
const REFINEMENT_TOL: f64 = 2e-3;
/// Terminal inventory of the deterministic paths.
const INVENTORY_TARGET_TOL: f64 = 0.02;

const FOUR: [ContractFamily; 4] = [
    ContractFamily::LinearPhysical,
    ContractFamily::LinearCash,
    ContractFamily::CollarPhysical,
    ContractFamily::CollarCash,
];
const FEES: [f64; 4] = [45.0029, 45.0130, 45.0042, 45.0078];
const P_GRID: [f64; 5] = [0.0, 0.2, 0.5, 0.8, 1.0];
const FEES_SIGMA1: [f64; 5] = [45.0020, 45.0018, 45.0014, 45.0010, 45.0007];
const FEES_SIGMA5: [f64; 5] = [45.0130, 45.0112, 45.0081, 45.0050, 45.0029];
const TWAP_FEES: [f64; 2] = [0.4997, 0.4999];
const FEES_RATE_1PCT: [f64; 4] = [44.6504, 44.6191, 44.5408, 44.4986];
const FEES_SIGMA7: [f64; 4] = [45.0040, 45.0185, 45.0079, 45.0086];
const ALPHAS: [f64; 3] = [0.002, 0.02, 0.2];
const CASH_FEES_BY_ALPHA: [f64; 3] = [45.0046, 45.0099, 45.0130];
const PAYOFFS: [f64; 4] = [-0.0137, 0.0530, -0.0101, 0.0527];
const TWAP_PAYOFFS: [f64; 2] = [0.5117, 0.5631];

/// Collects sub-checks of one criterion.
#[derive(Default)]
struct Outcome {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Outcome {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    fn close(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        let ok = (got - want).abs() <= tol;
        self.check(ok, format!("{label} {got:.5} vs {want:.4}"));
    }
}

fn baseline_config() -> ExperimentConfig {
    ExperimentConfig::default()
}

fn with_contracts(families: &[ContractFamily]) -> ExperimentConfig {
    ExperimentConfig {
        contracts: families.iter().map(|&f| ContractEntry::Family(f)).collect(),
        ..baseline_config()
    }
}

fn closed_form_equivalence(o: &mut Outcome) {
    let p = MarketParams::default();
    let g = GridSpec::default();
    let sim = SimConfig::default();
    for (family, closed) in [
        (
            ContractFamily::LinearPhysical,
            fee_physical_closed(0.0, sim.q0, sim.s0, &p),
        ),
        (
            ContractFamily::LinearCash,
            fee_trs_closed(0.0, sim.q0, sim.s0, &p),
        ),
    ] {
        let spec = ContractSpec::baseline(family, p.shares);
        let start = Instant::now();
        let surface = solve_fee_surface(&spec, &p, &g).expect("solve");
        let elapsed = start.elapsed();
        let pde = surface.fee_at(0, sim.s0, sim.q0).expect("initial layer");
        o.close(
            &format!("{family}"),
            pde,
            closed.expect("closed form"),
            CLOSED_FORM_TOL,
        );
        o.check(
            elapsed < SOLVE_BUDGET,
            format!("{family} solve {:.2}s", elapsed.as_secs_f64()),
        );
    }
}

fn fee_table(o: &mut Outcome) {
    let (_, rows) = run::run_fees(&baseline_config()).expect("fees");
    for (row, want) in rows.iter().zip(FEES) {
        o.close(&row.family.to_string(), row.fee, want, FEE_TABLE_TOL);
    }
}

fn regulatory_table(o: &mut Outcome) {
    let mut cfg = baseline_config();
    cfg.regulatory.p_values = P_GRID.to_vec();
    cfg.regulatory.sigma_values = vec![1.0, 5.0];
    cfg.regulatory.tau = 0.5;
    let (_, rows) = run::run_regulatory(&cfg).expect("regulatory");
    for (sigma, want) in [(1.0, FEES_SIGMA1), (5.0, FEES_SIGMA5)] {
        let fees: Vec<f64> = rows
            .iter()
            .filter(|r| r.sigma == sigma)
            .map(|r| r.fee)
            .collect();
        for ((fee, want), p) in fees.iter().zip(want).zip(P_GRID) {
            o.close(&format!("σ={sigma} p={p}"), *fee, want, REGULATORY_TOL);
        }
        let decreasing = fees.windows(2).all(|w| w[1] < w[0]);
        o.check(decreasing, format!("σ={sigma} decreasing in p"));
    }
}

fn twap_table(o: &mut Outcome) {
    let (_, rows) = run::run_twap(&baseline_config()).expect("twap");
    for (row, want) in rows.iter().zip(TWAP_FEES) {
        o.close(&row.family.to_string(), row.fee, want, TWAP_TOL);
    }
}

fn sensitivity_rows(o: &mut Outcome) {
    let cfg = with_contracts(&FOUR);
    let sweep = |parameter: &str, values: Vec<f64>, cfg: &ExperimentConfig| {
        let s = SweepConfig {
            parameter: parameter.to_string(),
            values,
        };
        run::sweep_rows(&s, cfg).expect("sweep")
    };
    for (row, want) in sweep("rate", vec![0.01], &cfg).iter().zip(FEES_RATE_1PCT) {
        o.close(
            &format!("r=0.01 {}", row.family),
            row.fee,
            want,
            SENSITIVITY_TOL,
        );
    }
    for (row, want) in sweep("volatility", vec![7.0], &cfg).iter().zip(FEES_SIGMA7) {
        o.close(
            &format!("σ=7 {}", row.family),
            row.fee,
            want,
            SENSITIVITY_TOL,
        );
    }
    let cash = with_contracts(&[ContractFamily::LinearCash]);
    let rows = sweep("terminal_penalty", ALPHAS.to_vec(), &cash);
    for (row, want) in rows.iter().zip(CASH_FEES_BY_ALPHA) {
        o.close(
            &format!("α={} linear_cash", row.value),
            row.fee,
            want,
            SENSITIVITY_TOL,
        );
    }
}

fn statistical_arbitrage(o: &mut Outcome) {
    let families: Vec<ContractFamily> = FOUR
        .into_iter()
        .chain([ContractFamily::TwapPhysical, ContractFamily::TwapCash])
        .collect();
    let wants: Vec<f64> = PAYOFFS.into_iter().chain(TWAP_PAYOFFS).collect();
    let mut cfg = with_contracts(&families);
    cfg.sim.n_paths = STATARB_PATHS;
    let start = Instant::now();
    let (_, rows) = run::run_statarb(&cfg, &run::contract_specs(&cfg).unwrap()).expect("statarb");
    let elapsed = start.elapsed();
    for (row, want) in rows.iter().zip(&wants) {
        let se: f64 = row.stderr.parse().expect("stderr");
        o.check(
            (row.estimate - want).abs() <= STATARB_SIGMAS * se,
            format!("{} {:.4}±{:.4} vs {want}", row.family, row.estimate, se),
        );
        o.check(
            row.estimate.signum() == want.signum(),
            format!("{} sign", row.family),
        );
    }
    o.check(
        elapsed < STATARB_BUDGET,
        format!("runtime {:.0}s", elapsed.as_secs_f64()),
    );
}

fn deterministic_path(family: ContractFamily) -> SimPath {
    let p = MarketParams::default();
    let spec = ContractSpec::baseline(family, p.shares);
    let (surface, control) = solve_contract(&spec, &p, &GridSpec::default()).unwrap();
    let cfg = SimConfig {
        n_paths: 1,
        ..SimConfig::default()
    };
    let fee = surface.fee_at(0, cfg.s0, cfg.q0).unwrap();
    let x0 = cfg.wealth() - cfg.q0 * cfg.s0 + fee;
    simulate_path(&control, &p, &cfg, &vec![0.0; cfg.n_steps], x0).unwrap()
}

fn surface_properties(o: &mut Outcome, family: ContractFamily, surface: &FeeSurface) {
    let p = MarketParams::default();
    let g = *surface.grid();
    let spec = ContractSpec::baseline(family, p.shares);
    let last = g.time_steps;
    let mut exact = true;
    for i in 0..g.price_nodes() {
        for j in 0..g.inventory_nodes() {
            let want = terminal_fee(&spec, g.inventory(j), g.price(i), &p);
            exact &= surface.data.value(last, i, j) == Some(want);
        }
    }
    o.check(exact, format!("{family} terminal layer exact"));

    let mut worst = 0.0f64;
    for n in 0..=last {
        let layer = surface.data.layer(n).unwrap();
        let m = g.inventory_nodes();
        for i in 1..g.price_nodes() {
            for j in 0..m {
                worst = worst.max(layer[(i - 1) * m + j] - layer[i * m + j]);
            }
        }
    }
    o.check(
        worst <= 1e-12,
        format!("{family} monotone in S (worst drop {worst:.1e})"),
    );

    let control = extract_control(surface, &p);
    let cap = control.max_speed;
    let clamped = control.data.values().iter().all(|v| v.abs() <= cap);
    o.check(clamped, format!("{family} control within ±C"));
}

fn ode_residuals(o: &mut Outcome) {
    let p = MarketParams::default();
    let c = TrsCoefficients::new(&p).unwrap();
    let (b, l, n) = (p.permanent_impact, p.temporary_impact, p.shares);
    let risk = 0.5 * p.volatility * p.volatility * p.risk_aversion;
    let a = c.constants.scale;
    let d = 1e-5;
    let fd = |f: &dyn Fn(f64) -> f64, t: f64| (f(t + d) - f(t - d)) / (2.0 * d);
    let mut worst = 0.0f64;
    for k in 1..20 {
        let t = k as f64 * 0.05;
        let theta = |t| riccati_theta(t, &p).unwrap();
        let h2 = |t| c.quadratic(t).unwrap();
        let h1 = |t| c.linear(t).unwrap();
        let h0 = |t| c.constant(t).unwrap();
        let r2 = -fd(&h2, t) - risk + (b - 2.0 * h2(t)).powi(2) / (4.0 * l);
        let r1 = -fd(&h1, t) + 2.0 * risk * n - (b - 2.0 * h2(t)) * (h1(t) + b * n) / (2.0 * l);
        let r0 = -fd(&h0, t) - risk * n * n + (h1(t) + b * n).powi(2) / (4.0 * l);
        let rt = fd(&theta, t) - (theta(t).powi(2) - a * a) / l;
        for r in [r2, r1, r0, rt] {
            worst = worst.max(r.abs());
        }
    }
    o.check(
        worst <= ODE_RESIDUAL_TOL,
        format!("ODE residual {worst:.1e}"),
    );
}

fn property_suite(o: &mut Outcome) {
    let p = MarketParams::default();
    let g = GridSpec::default();
    for family in FOUR {
        let spec = ContractSpec::baseline(family, p.shares);
        let surface = solve_fee_surface(&spec, &p, &g).unwrap();
        surface_properties(o, family, &surface);
    }
    ode_residuals(o);

    let coarse = with_contracts(&FOUR);
    let mut fine = coarse.clone();
    fine.grid = g.refined();
    let (_, a) = run::run_fees(&coarse).unwrap();
    let (_, b) = run::run_fees(&fine).unwrap();
    for (a, b) in a.iter().zip(&b) {
        let change = (a.fee - b.fee).abs();
        o.check(
            change < REFINEMENT_TOL,
            format!("{} refinement change {change:.1e}", a.family),
        );
    }

    for (family, target, turns) in [
        (ContractFamily::LinearPhysical, p.shares, 0),
        (ContractFamily::LinearCash, 0.0, 1),
    ] {
        let path = deterministic_path(family);
        let (_, q, _, _) = path.terminal();
        o.check(
            (q - target).abs() <= INVENTORY_TARGET_TOL,
            format!("{family} Q(T) = {q:.4} (target {target})"),
        );
        let changes = sign_changes(&path.v);
        o.check(changes == turns, format!("{family} {changes} sign changes"));
    }
}

fn small_config() -> ExperimentConfig {
    let mut cfg = baseline_config();
    cfg.grid = GridSpec {
        price_intervals: 40,
        inventory_intervals: 40,
        time_steps: 400,
        ..GridSpec::default()
    };
    cfg.sim.n_paths = 2_000;
    cfg.sim.n_steps = 200;
    cfg.regulatory.sigma_values = vec![5.0];
    cfg.sensitivities = vec![SweepConfig {
        parameter: "volatility".into(),
        values: vec![6.0],
    }];
    cfg
}

fn reproducibility(o: &mut Outcome) {
    let cfg = small_config();
    let pool = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
    };
    let first = pool(4).install(|| reproduce_all(&cfg)).expect("first run");
    let second = pool(4).install(|| reproduce_all(&cfg)).expect("second run");
    let single = pool(1)
        .install(|| reproduce_all(&cfg))
        .expect("single thread run");
    o.check(first == second, "two runs byte-identical");
    o.check(first == single, "1 and 4 threads byte-identical");
    o.check(first.get("manifest.json").is_some(), "manifest written");

    let dir = tempfile::tempdir().unwrap();
    hedgefee_cli::promote(&first, dir.path()).unwrap();
    let on_disk = first
        .iter()
        .all(|a| std::fs::read(dir.path().join(&a.name)).ok().as_deref() == Some(&a.bytes[..]));
    o.check(on_disk, "promoted files match");
}

type Criterion = (u32, &'static str, fn(&mut Outcome));

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (1, "closed-form equivalence", closed_form_equivalence),
        (2, "four-contract fee table", fee_table),
        (3, "regulatory p-sweep", regulatory_table),
        (4, "TWAP fees", twap_table),
        (5, "sensitivity rows", sensitivity_rows),
        (6, "expected payoffs", statistical_arbitrage),
        (7, "property suite", property_suite),
        (8, "reproducibility", reproducibility),
    ];
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut outcome = Outcome::default();
        let result = catch_unwind(AssertUnwindSafe(|| run(&mut outcome)));
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match result {
            Err(_) => ("FAIL", "panicked".to_string()),
            Ok(()) if outcome.failures.is_empty() => ("PASS", outcome.notes.join("; ")),
            Ok(()) => ("FAIL", outcome.failures.join("; ")),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {id} {name} ... {status} [{secs:.1}s] ({detail})");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
