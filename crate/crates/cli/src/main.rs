//! `acm`: command-line driver for homotopies of almost-commuting matrix
//! pairs and for eigenvalue stitching over sampled operator fields.
//!
//! Every run writes deterministic JSON artifacts into `--out` and prints a
//! short summary. Exit codes: 0 success, 1 bad input, 2 a certified bound
//! failed verification, 3 the sample grid is too sparse for the requested
//! tolerance.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use acm_core::io::{
    curves_csv, envelope_csv, read_json, write_json, write_text, CauchyFile,
    CertificateFile, CurvesFile, FieldFile, JumpsFile, MatrixDto, PathFile,
};
use acm_core::{
    build_homotopy, gen_almost_commuting_pair, gen_field, operator_norm,
    refine_field, stitch_field, verify_certificate, BaseKind, Error,
    GeneratorSpec, OperatorField, RefinementSchedule, StitchResult,
};
use acm_core::field::DensityViolation;
use acm_core::homotopy::VerificationReport;

/// Summary print that survives a closed pipe: `acm ... | head` must not
/// abort before the artifacts are written.
macro_rules! out {
    ($($arg:tt)*) => {
        { let _ = writeln!(std::io::stdout(), $($arg)*); }
    };
}

const FORMAT_NOTES: &str = "\
File formats (JSON; floats use shortest round-trip notation, so artifacts
reload bit for bit):

  matrix       {\"rows\": 2, \"cols\": 2, \"entries\": [[re, im], ...]}, row major.
  spec         {\"seed\": 7, \"dim\": 4, \"target_delta\": 1e-8,
                \"spectrum\": {\"uniform\": {\"lo\": -1.0, \"hi\": 1.0}}}
               Field specs add module_rank, fiber_dim, grid_size,
               \"base\": {\"kind\": \"interval\", \"a\": -1.0, \"b\": 1.0} and
               \"field_shape\": {\"avoided_crossing\": {\"coupling\": 0.1}}.
  path         {\"delta\": 1e-8, \"stage_marks\": [0.25, 0.5, 0.75],
                \"samples\": [{\"t\": 0.0, \"matrix\": {...}}, ...]}
  certificate  {\"certificate\": {\"delta\": ..., \"sup_commutator\": ...,
                \"thresholds\": {...}, ...}, \"verification\": {\"checks\": [...]}}
  field        {\"base\": {...}, \"p\": 2, \"n\": 4, \"grid\": [...],
                \"values\": [matrix, ...]}
  curves       {\"p\": ..., \"n\": ..., \"grid\": [...], \"curves\": [[matrix, ...]],
                \"breakpoints\": [...], \"jump_report\": [...]}
  jumps        {\"epsilon\": ..., \"max_snap_error\": ..., \"jump_report\": [...],
                \"density_violations\": [...], \"breakpoint_summaries\": [...]}
  cauchy       {\"epsilons\": [...], \"cauchy_deltas\": [...],
                \"cauchy_bounds\": [...], \"within_bounds\": true}

Every flag has an ACM_* environment twin (ACM_OUT, ACM_DELTA, ACM_SCHEDULE,
...). Flags win over the environment; the environment wins over defaults.

Exit codes: 0 success; 1 bad input; 2 a certified bound failed
verification; 3 the grid is too sparse for the requested tolerance.";

#[derive(Parser)]
#[command(
    name = "acm",
    version,
    about = "Homotopies for almost-commuting matrices and eigenvalue \
             stitching over operator fields",
    after_help = FORMAT_NOTES
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Directory the artifacts are written into.
    #[arg(long, global = true, env = "ACM_OUT", default_value = "out")]
    out: PathBuf,
    /// Also write CSV views (commutator envelope, curve samples).
    #[arg(long, global = true, env = "ACM_CSV")]
    csv: bool,
    /// Log filter, e.g. `info` or `acm_core=debug`.
    #[arg(long, global = true, env = "ACM_LOG", default_value = "warn")]
    log: String,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a matrix pair or an operator field from a generator spec.
    Gen(GenArgs),
    /// Build, retract and certify a path from a unitary to the identity.
    Homotopy(HomotopyArgs),
    /// Diagonalize a sampled field into eigenvalue curves.
    Stitch(StitchArgs),
    /// Stitch repeatedly over a tightening tolerance schedule.
    Refine(RefineArgs),
    /// Re-check a stored path against its certificate.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Generator spec (JSON).
    #[arg(long, env = "ACM_SPEC")]
    spec: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long, env = "ACM_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct HomotopyArgs {
    /// Hermitian control operator (matrix JSON).
    #[arg(long, env = "ACM_H")]
    h: PathBuf,
    /// Unitary to connect to the identity (matrix JSON).
    #[arg(long, env = "ACM_U")]
    u: PathBuf,
    /// Commutator budget; raised to the measured value when undershot.
    #[arg(long, env = "ACM_DELTA")]
    delta: f64,
    /// Path samples per homotopy stage.
    #[arg(long, env = "ACM_SAMPLES", default_value_t = 64)]
    samples: usize,
}

#[derive(Args)]
struct StitchArgs {
    /// Sampled operator field (field JSON).
    #[arg(long, env = "ACM_FIELD")]
    field: PathBuf,
    /// Eigenvalue snapping tolerance.
    #[arg(long, env = "ACM_EPSILON")]
    epsilon: f64,
}

#[derive(Args)]
struct RefineArgs {
    /// Sampled operator field (field JSON).
    #[arg(long, env = "ACM_FIELD")]
    field: PathBuf,
    /// Tolerance schedule `eps0:ratio:iters`, e.g. `1e-2:0.0625:4`.
    #[arg(long, env = "ACM_SCHEDULE", value_parser = parse_schedule)]
    schedule: RefinementSchedule,
}

#[derive(Args)]
struct VerifyArgs {
    /// Hermitian control operator (matrix JSON).
    #[arg(long, env = "ACM_H")]
    h: PathBuf,
    /// Stored path (path JSON).
    #[arg(long, env = "ACM_PATH")]
    path: PathBuf,
    /// Certificate to check the path against (certificate JSON).
    #[arg(long, env = "ACM_CERT")]
    cert: PathBuf,
}

/// Seed, dimensions and measured commutator of a generated pair.
#[derive(Serialize)]
struct PairMeta {
    seed: u64,
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    target_delta: Option<f64>,
    measured_delta: f64,
    h_norm: f64,
}

fn parse_schedule(text: &str) -> Result<RefinementSchedule, String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected eps0:ratio:iters, got {text:?}"));
    }
    let eps0: f64 = parts[0].parse().map_err(|e| format!("eps0: {e}"))?;
    let ratio: f64 = parts[1].parse().map_err(|e| format!("ratio: {e}"))?;
    let iterations: usize = parts[2].parse().map_err(|e| format!("iters: {e}"))?;
    let schedule = RefinementSchedule {
        eps0,
        ratio,
        iterations,
    };
    schedule.validate().map_err(|e| e.to_string())?;
    Ok(schedule)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Clap reserves exit code 2; here that slot means a violated
            // bound, so usage errors leave with 1 instead.
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.common.log)
        .init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> acm_core::Result<u8> {
    std::fs::create_dir_all(&cli.common.out).map_err(|source| Error::Io {
        path: cli.common.out.display().to_string(),
        source,
    })?;
    match &cli.command {
        Command::Gen(args) => cmd_gen(&cli.common, args),
        Command::Homotopy(args) => cmd_homotopy(&cli.common, args),
        Command::Stitch(args) => cmd_stitch(&cli.common, args),
        Command::Refine(args) => cmd_refine(&cli.common, args),
        Command::Verify(args) => cmd_verify(&cli.common, args),
    }
}

fn cmd_gen(common: &Common, args: &GenArgs) -> acm_core::Result<u8> {
    let mut spec: GeneratorSpec = read_json(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if spec.field_shape.is_some() {
        let field = gen_field(&spec)?;
        emit(common, "field.json", &FieldFile::from_field(&field))?;
        let kind = match field.base().kind {
            BaseKind::Interval => "interval",
            BaseKind::Circle => "circle",
        };
        out!(
            "field seed={} rank={} fiber={}: {} nodes on the {} [{}, {}], sup norm {:.3e}",
            spec.seed,
            field.module_rank(),
            field.fiber_dim(),
            field.nodes(),
            kind,
            field.base().a,
            field.base().b,
            field.sup_norm(),
        );
        out!("artifacts: field.json in {}", common.out.display());
    } else {
        let pair = gen_almost_commuting_pair(&spec)?;
        let h_norm = operator_norm(pair.h.matrix());
        emit(common, "h.json", &MatrixDto::from_matrix(pair.h.matrix()))?;
        emit(common, "u.json", &MatrixDto::from_matrix(pair.u.matrix()))?;
        let meta = PairMeta {
            seed: spec.seed,
            dim: pair.h.dim(),
            target_delta: spec.target_delta,
            measured_delta: pair.measured_delta,
            h_norm,
        };
        emit(common, "pair_meta.json", &meta)?;
        out!(
            "pair seed={} dim={}: commutator {:.3e}, control norm {:.3e}",
            meta.seed, meta.dim, meta.measured_delta, meta.h_norm,
        );
        out!(
            "artifacts: h.json u.json pair_meta.json in {}",
            common.out.display()
        );
    }
    Ok(0)
}

fn cmd_homotopy(common: &Common, args: &HomotopyArgs) -> acm_core::Result<u8> {
    let h = read_json::<MatrixDto>(&args.h)?.to_hermitian()?;
    let u = read_json::<MatrixDto>(&args.u)?.to_unitary()?;
    let outcome = build_homotopy(&h, &u, args.delta, args.samples)?;
    let cert = &outcome.certificate;
    let report = verify_certificate(&outcome.retracted, &h, cert)?;
    emit(
        common,
        "path.json",
        &PathFile::from_path(&outcome.retracted, cert.delta),
    )?;
    emit(
        common,
        "certificate.json",
        &CertificateFile {
            certificate: cert.clone(),
            verification: Some(report.clone()),
        },
    )?;
    if common.csv {
        let csv = envelope_csv(&outcome.retracted, &h)?;
        write_text(&common.out.join("envelope.csv"), &csv)?;
        info!("wrote {}", common.out.join("envelope.csv").display());
    }
    out!(
        "homotopy dim={} delta={:.3e}{}: sup commutator {:.3e} (limit {:.3e}), {} samples",
        h.dim(),
        cert.delta,
        if cert.delta_substituted {
            ", raised to the measured commutator"
        } else {
            ""
        },
        cert.sup_commutator,
        cert.thresholds.commutator,
        outcome.retracted.len(),
    );
    if !cert.bounds_guaranteed {
        out!("{}", UNGUARANTEED_NOTE);
    }
    print_report(&report);
    out!(
        "artifacts: path.json certificate.json in {}",
        common.out.display()
    );
    Ok(exit_for(&report))
}

fn cmd_stitch(common: &Common, args: &StitchArgs) -> acm_core::Result<u8> {
    let field = read_json::<FieldFile>(&args.field)?.to_field()?;
    let result = stitch_field(&field, args.epsilon)?;
    write_stitch_artifacts(common, &field, &result)?;
    print_stitch_summary(&result);
    out!(
        "artifacts: curves.json jumps.json in {}",
        common.out.display()
    );
    if result.density_violations.is_empty() {
        Ok(0)
    } else {
        print_density_report(&result.density_violations);
        Ok(3)
    }
}

fn cmd_refine(common: &Common, args: &RefineArgs) -> acm_core::Result<u8> {
    let field = read_json::<FieldFile>(&args.field)?.to_field()?;
    let schedule = args.schedule;
    let outcome = refine_field(&field, &schedule)?;
    write_stitch_artifacts(common, &field, &outcome.final_result)?;
    let epsilons: Vec<f64> = (0..schedule.iterations)
        .map(|m| schedule.epsilon(m))
        .collect();
    emit(
        common,
        "cauchy.json",
        &CauchyFile::from_refinement(&outcome, epsilons),
    )?;
    out!(
        "refine eps0={:.3e} ratio={} iterations={}: final epsilon {:.3e}",
        schedule.eps0, schedule.ratio, schedule.iterations, outcome.final_result.epsilon,
    );
    for (m, (delta, bound)) in outcome
        .cauchy_deltas
        .iter()
        .zip(&outcome.cauchy_bounds)
        .enumerate()
    {
        out!(
            "  pass {} -> {}: increment {:.3e} <= {:.3e}  {}",
            m,
            m + 1,
            delta,
            bound,
            if delta <= bound { "ok" } else { "FAIL" },
        );
    }
    out!(
        "artifacts: curves.json jumps.json cauchy.json in {}",
        common.out.display()
    );
    if !outcome.initial_density_violations.is_empty() {
        print_density_report(&outcome.initial_density_violations);
        return Ok(3);
    }
    if !outcome.within_bounds {
        out!("increments exceed the certified rate");
        return Ok(2);
    }
    out!("increments within the certified rate");
    Ok(0)
}

fn cmd_verify(common: &Common, args: &VerifyArgs) -> acm_core::Result<u8> {
    let h = read_json::<MatrixDto>(&args.h)?.to_hermitian()?;
    let (path, _) = read_json::<PathFile>(&args.path)?.to_path()?;
    let stored: CertificateFile = read_json(&args.cert)?;
    let report = verify_certificate(&path, &h, &stored.certificate)?;
    emit(
        common,
        "certificate.json",
        &CertificateFile {
            certificate: stored.certificate.clone(),
            verification: Some(report.clone()),
        },
    )?;
    out!(
        "verify: {} samples against delta={:.3e}",
        path.len(),
        stored.certificate.delta,
    );
    if !stored.certificate.bounds_guaranteed {
        out!("{}", UNGUARANTEED_NOTE);
    }
    print_report(&report);
    out!("artifacts: certificate.json in {}", common.out.display());
    Ok(exit_for(&report))
}

const UNGUARANTEED_NOTE: &str = "note: unguaranteed regime, delta too large \
     for the a-priori envelope; it is reported but not enforced";

fn emit<T: Serialize>(common: &Common, name: &str, value: &T) -> acm_core::Result<()> {
    let path = common.out.join(name);
    write_json(&path, value)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_stitch_artifacts(
    common: &Common,
    field: &OperatorField,
    result: &StitchResult,
) -> acm_core::Result<()> {
    emit(
        common,
        "curves.json",
        &CurvesFile::from_curves(field, &result.eigenvalues),
    )?;
    emit(common, "jumps.json", &JumpsFile::from_stitch(result))?;
    if common.csv {
        let csv = curves_csv(field, &result.eigenvalues);
        write_text(&common.out.join("curves.csv"), &csv)?;
        info!("wrote {}", common.out.join("curves.csv").display());
    }
    Ok(())
}

/// Breakpoints listed on stdout before eliding to the JSON report.
const BREAKPOINT_LINES: usize = 16;

fn print_stitch_summary(result: &StitchResult) {
    let curves = &result.eigenvalues;
    let max_jump = curves.jump_report().iter().cloned().fold(0.0f64, f64::max);
    out!(
        "stitch epsilon={:.3e}: {} curves over {} nodes, {} breakpoints, \
         max jump {:.3e}, snap error {:.3e}, ordering {}",
        result.epsilon,
        curves.curves().len(),
        curves.nodes(),
        curves.breakpoints().len(),
        max_jump,
        result.max_snap_error,
        if curves.ordering_ok() { "ok" } else { "violated" },
    );
    for record in result.breakpoint_records.iter().take(BREAKPOINT_LINES) {
        out!(
            "  breakpoint at node {}: gap {:.3e}, glue commutator {:.3e} (limit {:.3e})",
            record.node,
            record.max_gap,
            record.glue.sup_commutator,
            record.glue.thresholds.commutator,
        );
    }
    if result.breakpoint_records.len() > BREAKPOINT_LINES {
        out!(
            "  ... and {} more (see jumps.json)",
            result.breakpoint_records.len() - BREAKPOINT_LINES
        );
    }
    if let Some(seam) = &result.seam {
        out!(
            "  seam at node {}: holonomy gap {:.3e}, glue commutator {:.3e} (limit {:.3e})",
            seam.node,
            seam.max_gap,
            seam.glue.sup_commutator,
            seam.glue.thresholds.commutator,
        );
    }
}

fn print_density_report(violations: &[DensityViolation]) {
    out!(
        "grid too sparse for the requested tolerance: {} under-resolved node pairs",
        violations.len()
    );
    for v in violations {
        out!(
            "  nodes {}-{}: spectral motion {:.3e} >= {:.3e}",
            v.node,
            v.node + 1,
            v.gap,
            v.limit,
        );
    }
}

fn print_report(report: &VerificationReport) {
    for check in &report.checks {
        let status = match (check.enforced, check.passed) {
            (true, true) => "ok",
            (true, false) => "FAIL",
            (false, true) => "ok (unenforced)",
            (false, false) => "over (unenforced)",
        };
        out!(
            "  {:<24} {:>12.4e} <= {:>12.4e}  {}",
            check.name, check.measured, check.limit, status,
        );
    }
    out!(
        "verification {}",
        if report.passed { "passed" } else { "FAILED" },
    );
}

fn exit_for(report: &VerificationReport) -> u8 {
    if report.passed {
        0
    } else {
        2
    }
}
