use std::f64::consts::PI;

use slcrit_core::contraction::{
    build_loop, contract, stage5, Context, ContractionParams, HomotopyTrace, LoopFamily,
    LoopOptions,
};
use slcrit_core::funcspace::{Grid, GridFunction, NormKind};
use slcrit_core::nonlinearity::{analyze, parse, Nonlinearity, TamenessReport};
use slcrit_core::Error;

fn half_square() -> (Nonlinearity, TamenessReport) {
    let f = parse("x^2/2").unwrap();
    let report = analyze(&f, -30.0, 30.0, 3).unwrap();
    (f, report)
}

fn family(samples: usize, amplitude: f64, n: usize) -> LoopFamily {
    let (f, report) = half_square();
    let opts = LoopOptions {
        samples,
        amplitude,
        seed: 11,
    };
    build_loop(&f, 1, &report, Grid::new(n).unwrap(), opts).unwrap()
}

fn run(fam: &LoopFamily, params: &ContractionParams) -> HomotopyTrace {
    let (f, report) = half_square();
    contract(&f, &report, fam, params).unwrap()
}

#[test]
fn small_loop_is_certified() {
    let fam = family(6, 1e-2, 1024);
    let trace = run(&fam, &ContractionParams::defaults(1));
    let cert = trace.certification.unwrap();
    assert!(cert.certified, "{cert:?}");
    assert!(cert.max_residual <= 1e-6);
    assert!(cert.final_spread <= 1e-6);
    assert!(cert.pinned);
    assert_eq!(trace.stages.len(), 6);
    assert_eq!(trace.records.len(), 7 * (1 + 5 * 32));
    let u_star = trace.u_star.as_ref().unwrap();
    assert_eq!(u_star.at(512), trace.x_m);
    assert_eq!((u_star.at(0), u_star.at(1024)), (0.0, 0.0));
    let premise = trace.premise.unwrap();
    assert!(premise.c0_ok && premise.l1_ok, "{premise:?}");
}

#[test]
fn closed_loop_stays_closed() {
    let fam = family(6, 1e-2, 512);
    let trace = run(&fam, &ContractionParams::defaults(1));
    for stage in &trace.stages {
        assert_eq!(stage.first(), stage.last());
    }
}

#[test]
fn two_sample_family_is_connected() {
    let fam = family(0, 2e-2, 1024);
    assert_eq!(fam.len(), 2);
    assert_ne!(fam.samples[0], fam.samples[1]);
    let trace = run(&fam, &ContractionParams::defaults(1));
    assert!(trace.certification.unwrap().certified);
    let u_star = trace.u_star.as_ref().unwrap();
    for u in &trace.stages[5] {
        assert!(u.distance(u_star, NormKind::C0).unwrap() <= 1e-6);
    }
}

#[test]
fn stage_ends_meet_their_conditions() {
    let fam = family(4, 1e-2, 1024);
    let params = ContractionParams::defaults(1);
    let trace = run(&fam, &params);
    let (f, _) = half_square();
    let ctx = Context::new(&f, 1, trace.x_m, fam.grid(), params).unwrap();
    let nodes = trace.nodes;
    let grid = fam.grid();
    for u in &trace.stages[1] {
        // Flat at x_m on [delta2, delta1] and its mirror image.
        let lo = grid.nearest_node(params.delta2) + 1;
        for i in (lo..=nodes.d1).filter(|&i| grid.t(i) <= params.delta1) {
            assert_eq!(u.at(i), trace.x_m);
            assert_eq!(u.at(grid.cells() - i), trace.x_m);
        }
    }
    for u in &trace.stages[2] {
        for i in nodes.d2p..=nodes.d1p {
            let h = ctx.forward_offset(u, i).unwrap();
            assert!(h.abs() < 1e-8, "offset {h} at node {i}");
        }
        let h = ctx.forward_offset(u, nodes.r_d0p).unwrap();
        assert!((h - trace.eta).abs() < 1e-8);
    }
}

#[test]
fn non_member_sample_is_named() {
    let mut fam = family(4, 1e-2, 512);
    let grid = fam.grid();
    let bump = GridFunction::dirichlet_from_fn(grid, |t| 0.1 * t.sin()).unwrap();
    fam.samples[2] = fam.samples[2].axpy(1.0, &bump).unwrap();
    let (f, report) = half_square();
    let err = contract(&f, &report, &fam, &ContractionParams::defaults(1)).unwrap_err();
    match err.error {
        Error::Precondition(msg) => assert!(msg.contains("sample 2"), "{msg}"),
        other => panic!("unexpected {other}"),
    }
    assert_eq!(err.trace.stages.len(), 1);
}

#[test]
fn gap_measure_shrinks_with_tolerance() {
    let fam = family(4, 0.5, 512);
    let mut last = f64::INFINITY;
    for tol in [0.2, 0.1, 0.05, 0.025] {
        let params = ContractionParams {
            tol_wall: tol,
            ..ContractionParams::defaults(1)
        };
        let mu = run(&fam, &params).final_mu_at().unwrap();
        assert!(mu <= last, "tol {tol}: {mu} > {last}");
        last = mu;
    }
}

#[test]
fn substep_size_scales_with_resolution() {
    let fam = family(3, 5e-2, 512);
    let steps = |s_steps| {
        let params = ContractionParams {
            s_steps,
            tol_wall: 0.5,
            ..ContractionParams::defaults(1)
        };
        run(&fam, &params)
            .summaries
            .iter()
            .map(|s| s.max_step)
            .collect::<Vec<_>>()
    };
    let (coarse, fine) = (steps(8), steps(16));
    for k in [1, 2, 3, 5] {
        let ratio = fine[k] / coarse[k];
        assert!((0.4..=0.6).contains(&ratio), "stage {k}: ratio {ratio}");
    }
}

#[test]
fn squeeze_is_lipschitz_in_s() {
    // The walls move at speed m pi, so one substep changes the blend weight by
    // at most pi / (s_steps tol) and the state by that times |U3 - x_m|.
    let fam = family(3, 5e-2, 512);
    for s_steps in [8, 16] {
        let params = ContractionParams {
            s_steps,
            tol_wall: 0.5,
            ..ContractionParams::defaults(1)
        };
        let trace = run(&fam, &params);
        let spread = trace.stages[3]
            .iter()
            .flat_map(|u| u.values().iter().map(|v| (v - trace.x_m).abs()))
            .fold(0.0, f64::max);
        let bound = PI / (s_steps as f64 * params.tol_wall) * spread + 1e-3;
        assert!(trace.summaries[4].max_step <= bound);
    }
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    let fam = family(5, 1e-2, 512);
    let params = ContractionParams::defaults(1);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run(&fam, &params));
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| run(&fam, &params));
    assert_eq!(one.residuals_csv(), many.residuals_csv());
    assert_eq!(one.stages, many.stages);
}

#[test]
fn stage5_fixes_the_anchor() {
    let fam = family(2, 1e-2, 512);
    let params = ContractionParams::defaults(1);
    let trace = run(&fam, &params);
    let (f, _) = half_square();
    let ctx = Context::new(&f, 1, trace.x_m, fam.grid(), params).unwrap();
    let u_star = trace.u_star.clone().unwrap();
    let out = stage5(&ctx, 0, &u_star, &u_star).unwrap();
    assert!(out.end.distance(&u_star, NormKind::C0).unwrap() <= 1e-12);
}

#[test]
fn trace_directory_layout() {
    let fam = family(2, 1e-2, 256);
    let trace = run(&fam, &ContractionParams::defaults(1));
    let dir = tempfile::tempdir().unwrap();
    trace.write_dir(dir.path()).unwrap();
    for k in 0..=5 {
        for j in 0..fam.len() {
            assert!(dir.path().join(format!("stage{k}/theta{j}.csv")).is_file());
        }
    }
    let csv = std::fs::read_to_string(dir.path().join("residuals.csv")).unwrap();
    assert!(csv.starts_with("stage,s,theta,residual,mu_AT,correction_norm\n"));
    let ustar = std::fs::read_to_string(dir.path().join("ustar.csv")).unwrap();
    assert_eq!(
        GridFunction::from_csv(&ustar).unwrap(),
        trace.u_star.unwrap()
    );
    let params: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("params.json")).unwrap())
            .unwrap();
    assert_eq!(params["params"]["s_steps"], 32);
    assert!(params["certification"]["certified"].as_bool().unwrap());
}

#[test]
fn wall_closes_at_stage_end() {
    assert_eq!(slcrit_core::contraction::wall(2, 3.0), 2.0 * PI);
    assert_eq!(slcrit_core::contraction::wall(2, 4.0), 0.0);
}
