use hedgefee::closed_form::{control_closed, fee_physical_closed, fee_trs_closed};
use hedgefee::hjb::regulatory::{solve_regulatory_with, RegulatorySpec};
use hedgefee::hjb::{
    extract_control, solve_fee_surface, solve_fee_surface_with, HamiltonianStencil, Retain,
    SolveOptions,
};
use hedgefee::{ContractFamily, ContractSpec, Error, GridSpec, MarketParams};

const Q0: f64 = 0.5;
const S0: f64 = 45.0;

fn endpoints() -> SolveOptions {
    SolveOptions {
        retain: Retain::Endpoints,
        ..Default::default()
    }
}

fn fee(family: ContractFamily, params: &MarketParams, grid: &GridSpec) -> f64 {
    let spec = ContractSpec::baseline(family, params.shares);
    let s = solve_fee_surface_with(&spec, params, grid, &endpoints()).unwrap();
    s.fee_at(0, S0, Q0).unwrap()
}

fn max_gap_to_closed_form(family: ContractFamily, grid: &GridSpec) -> f64 {
    let p = MarketParams::default();
    let spec = ContractSpec::baseline(family, p.shares);
    let s = solve_fee_surface_with(&spec, &p, grid, &endpoints()).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..grid.price_nodes() {
        let sp = grid.price(i);
        if !(30.0..=60.0).contains(&sp) {
            continue;
        }
        for j in 0..grid.inventory_nodes() {
            let q = grid.inventory(j);
            if !(0.0..=1.0).contains(&q) {
                continue;
            }
            let exact = match family {
                ContractFamily::LinearPhysical => fee_physical_closed(0.0, q, sp, &p),
                _ => fee_trs_closed(0.0, q, sp, &p),
            }
            .unwrap();
            worst = worst.max((s.data.value(0, i, j).unwrap() - exact).abs());
        }
    }
    worst
}

#[test]
fn linear_fees_match_closed_forms() {
    let p = MarketParams::default();
    let g = GridSpec::default();
    let phys = fee(ContractFamily::LinearPhysical, &p, &g);
    let cash = fee(ContractFamily::LinearCash, &p, &g);
    assert!(
        (phys - fee_physical_closed(0.0, Q0, S0, &p).unwrap()).abs() < 1e-3,
        "{phys}"
    );
    assert!(
        (cash - fee_trs_closed(0.0, Q0, S0, &p).unwrap()).abs() < 1e-3,
        "{cash}"
    );
    assert!((cash - 45.0130).abs() < 1e-3);
}

#[test]
fn closed_form_gap_shrinks_under_refinement() {
    let g = GridSpec::default();
    for family in [ContractFamily::LinearPhysical, ContractFamily::LinearCash] {
        let coarse = max_gap_to_closed_form(family, &g);
        let fine = max_gap_to_closed_form(family, &g.refined());
        assert!(coarse <= 2e-3, "{family}: {coarse}");
        assert!(fine < coarse, "{family}: {fine} vs {coarse}");
    }
}

#[test]
fn collar_fees() {
    let p = MarketParams::default();
    let g = GridSpec::default();
    let phys = fee(ContractFamily::CollarPhysical, &p, &g);
    let cash = fee(ContractFamily::CollarCash, &p, &g);
    assert!((phys - 45.0042).abs() < 2e-3, "{phys}");
    assert!((cash - 45.0078).abs() < 2e-3, "{cash}");
}

#[test]
fn positive_rate_discounts_the_fee() {
    let mut p = MarketParams::default();
    p.rate = 0.01;
    let phys = fee(ContractFamily::LinearPhysical, &p, &GridSpec::default());
    assert!((phys - 44.6504).abs() < 5e-3, "{phys}");
}

#[test]
fn positive_drift_needs_room_above_target() {
    // the optimal inventory overshoots N when μ > 0, so q_max = 1 truncates it
    let mut p = MarketParams::default();
    p.drift = 0.5;
    let g = GridSpec {
        q_max: 3.0,
        inventory_intervals: 200,
        ..GridSpec::default()
    };
    let phys = fee(ContractFamily::LinearPhysical, &p, &g);
    let cash = fee(ContractFamily::LinearCash, &p, &g);
    assert!((phys - 44.6346).abs() < 5e-3, "{phys}");
    assert!((cash - 44.7134).abs() < 5e-3, "{cash}");
}

#[test]
fn controls_from_solved_surfaces() {
    let p = MarketParams::default();
    let g = GridSpec::default();
    let phys = solve_fee_surface(
        &ContractSpec::baseline(ContractFamily::LinearPhysical, 1.0),
        &p,
        &g,
    )
    .unwrap();
    let c = extract_control(&phys, &p);
    let (i0, j0, jn) = (50, 75, 100);
    let v = c.data.value(0, i0, j0).unwrap();
    let want = control_closed(0.0, Q0, ContractFamily::LinearPhysical, &p).unwrap();
    // the speed is ∂_qP / 2l, so the first-order error in q is magnified 500x
    let coarse_gap = (v - want).abs();
    assert!(coarse_gap < 0.15, "{v} vs {want}");
    let fine_q = GridSpec {
        inventory_intervals: 200,
        ..g
    };
    let spec = ContractSpec::baseline(ContractFamily::LinearPhysical, 1.0);
    let fine = solve_fee_surface_with(&spec, &p, &fine_q, &endpoints()).unwrap();
    let v_fine = extract_control(&fine, &p).data.value(0, i0, 150).unwrap();
    let fine_gap = (v_fine - want).abs();
    assert!(fine_gap < 0.6 * coarse_gap, "{fine_gap} vs {coarse_gap}");
    drop((phys, c));

    // at the target the hedge is complete and trading stops; q = N needs to be
    // an interior node for the central stencil
    let wide = GridSpec {
        price_intervals: 20,
        q_max: 2.0,
        inventory_intervals: 150,
        time_steps: 500,
        ..g
    };
    let s = solve_fee_surface(&spec, &p, &wide).unwrap();
    let c = extract_control(&s, &p);
    let v = c.data.value(wide.time_steps - 1, 10, 100).unwrap();
    assert!(v.abs() < 1e-6, "{v}");

    let cash = solve_fee_surface(
        &ContractSpec::baseline(ContractFamily::LinearCash, 1.0),
        &p,
        &g,
    )
    .unwrap();
    let c = extract_control(&cash, &p);
    let v = c.data.value(950, i0, jn).unwrap();
    assert_eq!(v, -p.max_speed);
}

#[test]
fn fees_increase_with_price() {
    let p = MarketParams::default();
    let g = GridSpec::default();
    for family in [
        ContractFamily::LinearPhysical,
        ContractFamily::LinearCash,
        ContractFamily::CollarPhysical,
        ContractFamily::CollarCash,
    ] {
        let spec = ContractSpec::baseline(family, p.shares);
        let s = solve_fee_surface_with(&spec, &p, &g, &endpoints()).unwrap();
        for j in 0..g.inventory_nodes() {
            for i in 1..g.price_nodes() {
                let lo = s.data.value(0, i - 1, j).unwrap();
                let hi = s.data.value(0, i, j).unwrap();
                assert!(hi >= lo - 1e-12, "{family} j={j} i={i}: {lo} > {hi}");
            }
        }
    }
}

#[test]
fn central_stencil_blows_up_at_baseline() {
    let p = MarketParams::default();
    let spec = ContractSpec::baseline(ContractFamily::LinearPhysical, 1.0);
    let opts = SolveOptions {
        stencil: HamiltonianStencil::Central,
        retain: Retain::Endpoints,
    };
    let err = solve_fee_surface_with(&spec, &p, &GridSpec::default(), &opts).unwrap_err();
    assert!(matches!(err, Error::NonFinite { .. }), "{err:?}");
}

#[test]
fn regulatory_mixture() {
    let p = MarketParams::default();
    let g = GridSpec::default();
    let mut last = f64::NEG_INFINITY;
    for prob in [1.0, 0.5, 0.0] {
        let reg = RegulatorySpec {
            approval_probability: prob,
            decision_time: 0.5,
        };
        let s = solve_regulatory_with(&reg, &p, &g, &endpoints()).unwrap();
        let f = s.pre.fee_at(0, S0, Q0).unwrap();
        if prob == 0.5 {
            assert!((f - 45.0081).abs() < 2e-3, "{f}");
        }
        assert!(f > last);
        last = f;
    }
}
