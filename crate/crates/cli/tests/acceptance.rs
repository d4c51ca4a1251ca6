//! Acceptance suite: every certified inequality exercised over seeded
//! instance families. One test per criterion; each prints a single PASS
//! line with the measured extremes (visible with `--nocapture`).

use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;

use acm_core::homotopy::{lemma_nn_bound, triangularize_pair, HomotopyCertificate};
use acm_core::instances::SplitMix64;
use acm_core::linalg::exp_i_hermitian;
use acm_core::{
    build_homotopy, commutator_norm, gen_almost_commuting_pair, gen_field,
    operator_norm, refine_field, stitch_field, verify_certificate, BaseKind,
    BaseSpace, ComplexMatrix, FieldShape, GeneratorSpec, HermitianOperator,
    OperatorField, RefinementSchedule, SpectrumSpec, UnitaryOperator,
    VerificationReport,
};

const SUITE_SIZE: usize = 200;
const SUITE_DELTAS: [f64; 3] = [1e-6, 1e-8, 1e-10];

struct Trial {
    cert: HomotopyCertificate,
    report: VerificationReport,
}

struct BoundSuite {
    trials: Vec<Trial>,
    elapsed: Duration,
}

/// Criteria 1 through 3 read the same 200 homotopies; built once.
fn bound_suite() -> &'static BoundSuite {
    static SUITE: OnceLock<BoundSuite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let start = Instant::now();
        let mut trials = Vec::with_capacity(SUITE_SIZE);
        for i in 0..SUITE_SIZE as u64 {
            let dim = 2 + (i as usize * 7) % 15;
            let delta = SUITE_DELTAS[(i % 3) as usize];
            let spec = GeneratorSpec::pair(
                1000 + i,
                dim,
                SpectrumSpec::Uniform { lo: -1.0, hi: 1.0 },
                delta,
            );
            let pair = gen_almost_commuting_pair(&spec).expect("pair generation");
            let outcome =
                build_homotopy(&pair.h, &pair.u, delta, 8).expect("homotopy construction");
            let report = verify_certificate(&outcome.retracted, &pair.h, &outcome.certificate)
                .expect("verification");
            trials.push(Trial {
                cert: outcome.certificate,
                report,
            });
        }
        BoundSuite {
            trials,
            elapsed: start.elapsed(),
        }
    })
}

fn random_hermitian(rng: &mut SplitMix64, n: usize) -> HermitianOperator {
    let raw = ComplexMatrix::from_fn(n, n, |_, _| rng.complex_symmetric());
    HermitianOperator::new(raw.hermitian_part()).unwrap()
}

#[test]
fn criterion_01_homotopy_bound_suite() {
    let suite = bound_suite();
    assert_eq!(suite.trials.len(), SUITE_SIZE);
    let mut slimmest = f64::INFINITY;
    for trial in &suite.trials {
        let cert = &trial.cert;
        assert!(
            !cert.delta_substituted,
            "a generated pair overshot its commutator budget"
        );
        assert!(cert.bounds_guaranteed);
        assert!(
            cert.sup_commutator <= cert.thresholds.commutator,
            "envelope {} over limit {}",
            cert.sup_commutator,
            cert.thresholds.commutator
        );
        assert!(cert.endpoint_error_start <= 1e-10);
        assert!(cert.endpoint_error_end <= 1e-10);
        let unitarity = trial.report.check("unitarity").expect("unitarity check");
        assert!(unitarity.measured <= 1e-10);
        assert!(trial.report.passed);
        slimmest = slimmest
            .min(cert.thresholds.commutator / cert.sup_commutator.max(f64::MIN_POSITIVE));
    }
    assert!(
        suite.elapsed < Duration::from_secs(60),
        "suite took {:?}",
        suite.elapsed
    );
    println!(
        "criterion 1: PASS - {} homotopies in {:.1?}, envelope margin >= {:.1}x",
        SUITE_SIZE, suite.elapsed, slimmest
    );
}

#[test]
fn criterion_02_truncation_bound() {
    let suite = bound_suite();
    let mut worst = 0.0f64;
    for trial in &suite.trials {
        let cert = &trial.cert;
        assert!(
            cert.truncation_error < cert.thresholds.truncation,
            "truncation {} not under {}",
            cert.truncation_error,
            cert.thresholds.truncation
        );
        worst = worst.max(cert.truncation_error / cert.thresholds.truncation);
    }
    println!(
        "criterion 2: PASS - truncation under 4 norm^(1/2) delta^(1/4) in all {} trials (worst ratio {:.3e})",
        SUITE_SIZE, worst
    );
}

#[test]
fn criterion_03_stage_envelopes() {
    let suite = bound_suite();
    let mut worst_dist = 0.0f64;
    let mut worst_gap = 0.0f64;
    for trial in &suite.trials {
        let cert = &trial.cert;
        assert!(
            cert.sup_unitary_distance <= cert.thresholds.stage3_distance,
            "pre-retraction drift {} over {}",
            cert.sup_unitary_distance,
            cert.thresholds.stage3_distance
        );
        assert!(
            cert.retraction_gap <= cert.thresholds.retraction_gap,
            "retraction gap {} over {}",
            cert.retraction_gap,
            cert.thresholds.retraction_gap
        );
        worst_dist = worst_dist.max(cert.sup_unitary_distance / cert.thresholds.stage3_distance);
        worst_gap = worst_gap.max(cert.retraction_gap / cert.thresholds.retraction_gap);
    }
    println!(
        "criterion 3: PASS - drift ratio <= {:.3e}, retraction ratio <= {:.3e} over {} trials",
        worst_dist, worst_gap, SUITE_SIZE
    );
}

#[test]
fn criterion_04_block_row_mass_bound() {
    for trial in 0..300u64 {
        let mut rng = SplitMix64::new(40_000 + trial);
        let blocks = 2 + (rng.next_u64() % 5) as usize;
        let sizes: Vec<usize> = (0..blocks)
            .map(|_| 1 + (rng.next_u64() % 3) as usize)
            .collect();
        let dim: usize = sizes.iter().sum();
        let a = ComplexMatrix::from_fn(dim, dim, |_, _| rng.complex_symmetric());
        // Measure the masses first, then pick ε just above the largest one
        // so the precondition holds with no slack to spare.
        let probe = lemma_nn_bound(&a, &sizes, 1.0).unwrap();
        let eps = probe.max_row_mass.sqrt() * (1.0 + 1e-6);
        let report = lemma_nn_bound(&a, &sizes, eps).unwrap();
        assert!(report.precondition_met);
        assert!(
            report.bound_holds,
            "norm {} not under {} for sizes {:?}",
            report.measured_norm, report.bound, sizes
        );
    }
    // All entries ε/√N over N scalar blocks: rank one, norm exactly ε√N.
    let n_blocks = 16;
    let eps = 0.25;
    let c = eps / (n_blocks as f64).sqrt();
    let extremal = ComplexMatrix::from_fn(n_blocks, n_blocks, |_, _| Complex64::new(c, 0.0));
    let report = lemma_nn_bound(&extremal, &vec![1; n_blocks], eps).unwrap();
    let gap = (report.measured_norm - report.bound).abs();
    assert!(gap <= 1e-12, "extremal gap {}", gap);
    println!(
        "criterion 4: PASS - 300 randomized blocks under eps sqrt(N); extremal case tight to {:.3e}",
        gap
    );
}

#[test]
fn criterion_05_triangularization() {
    let eps = 1e-8;
    let mut worst_defect = 0.0f64;
    let mut worst_residual = 0.0f64;
    for trial in 0..100u64 {
        let mut rng = SplitMix64::new(50_000 + trial);
        let top = 1 + (rng.next_u64() % 3) as usize;
        let bottom = 1 + (rng.next_u64() % 3) as usize;
        let a = ComplexMatrix::from_fn(top + bottom, top + bottom, |_, _| {
            rng.complex_symmetric()
        });
        let tri = triangularize_pair(&a, top, eps).unwrap();
        assert!(tri.residual < eps, "residual {}", tri.residual);
        worst_residual = worst_residual.max(tri.residual);
        for j in 0..50 {
            let t = j as f64 / 49.0;
            let defect = tri.rotation.at(t).matrix().unitary_defect();
            assert!(defect < 1e-12, "defect {} at t={}", defect, t);
            worst_defect = worst_defect.max(defect);
        }
    }
    println!(
        "criterion 5: PASS - 100 rotations x 50 samples: defect <= {:.3e}, residual <= {:.3e}",
        worst_defect, worst_residual
    );
}

#[test]
fn criterion_06_single_cell_branch() {
    let delta = 1e-4f64; // cell width delta^(1/4) = 0.1
    let limit = delta.sqrt().sqrt() + 1e-12;
    let mut worst = 0.0f64;
    for trial in 0..10u64 {
        let dim = 3 + (trial as usize % 6);
        // Diameter 1e-3: two orders under the cell width.
        let spectrum: Vec<f64> = (0..dim)
            .map(|k| 0.4 + 1e-3 * k as f64 / dim as f64)
            .collect();
        let spec = GeneratorSpec::pair(60_000 + trial, dim, SpectrumSpec::Explicit(spectrum), delta);
        let pair = gen_almost_commuting_pair(&spec).unwrap();
        let outcome = build_homotopy(&pair.h, &pair.u, delta, 16).unwrap();
        assert_eq!(
            outcome.retracted.stage_marks(),
            &[0.0, 1.0],
            "expected the single-segment branch"
        );
        assert!(
            outcome.certificate.sup_commutator <= limit,
            "envelope {} over {}",
            outcome.certificate.sup_commutator,
            limit
        );
        worst = worst.max(outcome.certificate.sup_commutator);
    }
    println!(
        "criterion 6: PASS - single-cell envelopes <= {:.3e} (limit {:.3e})",
        worst, limit
    );
}

#[test]
fn criterion_07_exact_commuting_regression() {
    let mut worst = 0.0f64;
    for trial in 0..5u64 {
        let n = 4 + trial as usize;
        let mut rng = SplitMix64::new(70_000 + trial);
        let frame = exp_i_hermitian(&random_hermitian(&mut rng, n), 1.0);
        let lambdas: Vec<f64> = (0..n)
            .map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64 + 0.01 * rng.symmetric())
            .collect();
        let phases: Vec<Complex64> = (0..n)
            .map(|_| Complex64::from_polar(1.0, 3.0 * rng.symmetric()))
            .collect();
        let h = HermitianOperator::new(
            ComplexMatrix::diag_real(&lambdas)
                .from_frame(frame.matrix())
                .hermitian_part(),
        )
        .unwrap();
        let u = UnitaryOperator::new(
            ComplexMatrix::diag_complex(&phases).from_frame(frame.matrix()),
        )
        .unwrap();
        let h_norm = operator_norm(h.matrix());
        let outcome = build_homotopy(&h, &u, 1e-8, 16).unwrap();
        let ratio = outcome.certificate.sup_commutator / h_norm;
        assert!(
            ratio <= 1e-10,
            "commuting pair drifted to {} of the norm",
            ratio
        );
        worst = worst.max(ratio);
    }
    println!(
        "criterion 7: PASS - commuting pairs stay within {:.3e} of exactly commuting",
        worst
    );
}

#[test]
fn criterion_08_shift_invariance() {
    let spec = GeneratorSpec::pair(
        8_800,
        8,
        SpectrumSpec::Uniform { lo: -1.0, hi: 1.0 },
        1e-8,
    );
    let pair = gen_almost_commuting_pair(&spec).unwrap();
    let shifted = pair.h.shift(3.0);
    let plain = build_homotopy(&pair.h, &pair.u, 1e-8, 16).unwrap();
    let moved = build_homotopy(&shifted, &pair.u, 1e-8, 16).unwrap();
    assert_eq!(plain.retracted.len(), moved.retracted.len());
    let mut worst = 0.0f64;
    for (a, b) in plain
        .retracted
        .samples()
        .iter()
        .zip(moved.retracted.samples())
    {
        assert_eq!(a.t, b.t);
        let ca = commutator_norm(&a.matrix, pair.h.matrix());
        let cb = commutator_norm(&b.matrix, shifted.matrix());
        worst = worst.max((ca - cb).abs());
    }
    let sup_gap =
        (plain.certificate.sup_commutator - moved.certificate.sup_commutator).abs();
    worst = worst.max(sup_gap);
    assert!(worst <= 1e-12, "shift moved the envelope by {}", worst);
    println!(
        "criterion 8: PASS - h + 3 changes the envelope by at most {:.3e}",
        worst
    );
}

#[test]
fn criterion_09_stitching_oracle() {
    let base = BaseSpace {
        kind: BaseKind::Interval,
        a: -1.0,
        b: 1.0,
    };
    let nodes = 101;
    let grid: Vec<f64> = (0..nodes)
        .map(|j| -1.0 + 2.0 * j as f64 / (nodes - 1) as f64)
        .collect();
    let values: Vec<HermitianOperator> = grid
        .iter()
        .map(|&x| {
            HermitianOperator::new(ComplexMatrix::from_fn(2, 2, |i, j| {
                if i == j {
                    Complex64::new(if i == 0 { x } else { -x }, 0.0)
                } else {
                    Complex64::new(0.1, 0.0)
                }
            }))
            .unwrap()
        })
        .collect();
    let field = OperatorField::new(base, grid.clone(), 1, 2, values).unwrap();
    let eps = 0.05;
    let result = stitch_field(&field, eps).unwrap();
    assert!(result.density_violations.is_empty());
    let tol = eps / 2.0 + 1e-9;
    let mut worst = 0.0f64;
    for (j, &x) in grid.iter().enumerate() {
        let oracle = (x * x + 0.01f64).sqrt();
        // Curves follow the eigendecomposition order: index 0 on top.
        let high = result.eigenvalues.curves()[0][j].matrix().get(0, 0).re;
        let low = result.eigenvalues.curves()[1][j].matrix().get(0, 0).re;
        worst = worst.max((low + oracle).abs()).max((high - oracle).abs());
    }
    assert!(worst <= tol, "curve error {} over {}", worst, tol);

    let mut rng = SplitMix64::new(90_000);
    let constant = random_hermitian(&mut rng, 3);
    let cgrid: Vec<f64> = (0..41).map(|j| -1.0 + j as f64 / 20.0).collect();
    let cfield = OperatorField::new(base, cgrid, 1, 3, vec![constant; 41]).unwrap();
    let cres = stitch_field(&cfield, eps).unwrap();
    assert!(cres.eigenvalues.breakpoints().is_empty());
    assert!(cres.eigenvalues.jump_report().iter().all(|&g| g == 0.0));
    println!(
        "criterion 9: PASS - avoided crossing within {:.3e} of the closed form (tol {:.3e}); constant field jump-free",
        worst, tol
    );
}

#[test]
fn criterion_10_refinement_cauchy() {
    let spec = GeneratorSpec::field(
        10_000,
        4,
        2,
        SpectrumSpec::Uniform { lo: -1.0, hi: 1.0 },
        FieldShape::ConjugatedSmooth { rate: 1.0 },
        201,
        BaseSpace {
            kind: BaseKind::Interval,
            a: -1.0,
            b: 1.0,
        },
    );
    let field = gen_field(&spec).unwrap();
    let schedule = RefinementSchedule {
        eps0: 1e-2,
        ratio: 1.0 / 16.0,
        iterations: 4,
    };
    let start = Instant::now();
    let outcome = refine_field(&field, &schedule).unwrap();
    let elapsed = start.elapsed();
    assert!(outcome.initial_density_violations.is_empty());
    assert!(outcome.within_bounds);
    for (delta, bound) in outcome.cauchy_deltas.iter().zip(&outcome.cauchy_bounds) {
        assert!(delta <= bound, "increment {} over bound {}", delta, bound);
    }
    for pair in outcome.cauchy_deltas.windows(2) {
        assert!(
            pair[1] <= pair[0] * 1.1,
            "increments grew: {} -> {}",
            pair[0],
            pair[1]
        );
    }
    assert!(elapsed < Duration::from_secs(30), "took {:?}", elapsed);
    println!(
        "criterion 10: PASS - increments {:?} under their bounds in {:.1?}",
        outcome.cauchy_deltas, elapsed
    );
}

const PAIR_SPEC: &str = r#"{
  "seed": 11,
  "dim": 5,
  "spectrum": { "uniform": { "lo": -1.0, "hi": 1.0 } },
  "target_delta": 1e-8
}
"#;

const FIELD_SPEC: &str = r#"{
  "seed": 3,
  "module_rank": 2,
  "fiber_dim": 2,
  "spectrum": { "uniform": { "lo": -1.0, "hi": 1.0 } },
  "field_shape": { "avoided_crossing": { "coupling": 0.1 } },
  "grid_size": 101,
  "base": { "kind": "interval", "a": -1.0, "b": 1.0 }
}
"#;

fn acm(root: &std::path::Path, args: &[&str]) {
    let output = Command::new(env!("CARGO_BIN_EXE_acm"))
        .args(args)
        .current_dir(root)
        .env_remove("ACM_OUT")
        .env_remove("ACM_CSV")
        .env_remove("ACM_LOG")
        .env_remove("ACM_SPEC")
        .env_remove("ACM_SEED")
        .env_remove("ACM_H")
        .env_remove("ACM_U")
        .env_remove("ACM_DELTA")
        .env_remove("ACM_SAMPLES")
        .env_remove("ACM_FIELD")
        .env_remove("ACM_EPSILON")
        .env_remove("ACM_SCHEDULE")
        .env_remove("ACM_PATH")
        .env_remove("ACM_CERT")
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "acm {:?} failed: {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn criterion_11_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("pair_spec.json"), PAIR_SPEC).unwrap();
    std::fs::write(root.join("field_spec.json"), FIELD_SPEC).unwrap();

    for pass in ["a", "b"] {
        let p = |tail: &str| format!("{pass}/{tail}");
        acm(root, &["gen", "--spec", "pair_spec.json", "--out", &p("pair")]);
        acm(
            root,
            &[
                "homotopy",
                "--h",
                &p("pair/h.json"),
                "--u",
                &p("pair/u.json"),
                "--delta",
                "1e-8",
                "--samples",
                "12",
                "--csv",
                "--out",
                &p("hom"),
            ],
        );
        acm(root, &["gen", "--spec", "field_spec.json", "--out", &p("field")]);
        acm(
            root,
            &[
                "stitch",
                "--field",
                &p("field/field.json"),
                "--epsilon",
                "0.05",
                "--csv",
                "--out",
                &p("stitch"),
            ],
        );
        acm(
            root,
            &[
                "refine",
                "--field",
                &p("field/field.json"),
                "--schedule",
                "1e-1:0.25:3",
                "--out",
                &p("refine"),
            ],
        );
        acm(
            root,
            &[
                "verify",
                "--h",
                &p("pair/h.json"),
                "--path",
                &p("hom/path.json"),
                "--cert",
                &p("hom/certificate.json"),
                "--out",
                &p("verify"),
            ],
        );
    }

    let artifacts = [
        "pair/h.json",
        "pair/u.json",
        "pair/pair_meta.json",
        "hom/path.json",
        "hom/certificate.json",
        "hom/envelope.csv",
        "field/field.json",
        "stitch/curves.json",
        "stitch/jumps.json",
        "stitch/curves.csv",
        "refine/curves.json",
        "refine/jumps.json",
        "refine/cauchy.json",
        "verify/certificate.json",
    ];
    for artifact in artifacts {
        let first = std::fs::read(root.join("a").join(artifact)).unwrap();
        let second = std::fs::read(root.join("b").join(artifact)).unwrap();
        assert!(first == second, "artifact {artifact} differs between runs");
    }
    println!(
        "criterion 11: PASS - {} artifacts byte-identical across re-runs",
        artifacts.len()
    );
}
