//! Batch driver for the boundary-feedback wave toolkit: meshes,
//! closed-loop simulations with decay fits, spectra, resolvent sweeps,
//! and multiplier-hypothesis reports, each as a CSV/text artifact with
//! a `.meta` sidecar recording the resolved configuration.
//!
//! Exit codes: 0 success, 1 computation failure, 2 invalid
//! configuration (nothing written).

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::{FileConfig, Resolved};
use wavebc::{
    annulus_levelset, build_annulus_mesh, build_levelset_mesh, build_system, check_hypotheses_with_tol,
    fit_decay, hypothesis_samples, levelset_field, quadratic_eigs, resolvent_sweep, simulate,
    smooth_data, Error, Generator, Mesh, SampleKind, State, VectorField,
};

#[derive(Parser)]
#[command(name = "wavebc", version, about = "Wave equation with dynamic and feedback boundary conditions: desk-scale numerical experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Inner radius of the annulus (default 1).
    #[arg(long)]
    r0: Option<f64>,
    /// Outer radius of the annulus (default 2).
    #[arg(long)]
    r1: Option<f64>,
    /// Radial node count (default 8).
    #[arg(long)]
    nr: Option<usize>,
    /// Azimuthal node count (default 32).
    #[arg(long)]
    ntheta: Option<usize>,
    /// Feedback gain on the outer boundary (default 1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Seed for random initial data (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an annulus mesh and write its text form.
    Mesh {
        #[command(flatten)]
        common: Common,
        /// Output path for the mesh text file.
        #[arg(long)]
        mesh_out: PathBuf,
        /// Also assemble the system and dump all matrices as
        /// `row col re im` coordinate files into this directory.
        #[arg(long)]
        dump_matrices: Option<PathBuf>,
    },
    /// Time-march the closed loop from seeded random data and write the
    /// energy trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Horizon (default 50).
        #[arg(long = "T")]
        t_final: Option<f64>,
        /// Time step (default h_min/2).
        #[arg(long)]
        dt: Option<f64>,
        /// Resolvent smoothing applications on the initial data
        /// (default 2).
        #[arg(long)]
        smooth_k: Option<usize>,
        /// Decay-fit window start (default 5(r1-r0)).
        #[arg(long)]
        fit_t0: Option<f64>,
        /// Decay-fit window end (default T).
        #[arg(long)]
        fit_t1: Option<f64>,
        /// Output path for the `t,E,D` trace CSV.
        #[arg(long)]
        trace_out: PathBuf,
        /// Optional output path for the final state CSV.
        #[arg(long)]
        state_out: Option<PathBuf>,
    },
    /// Eigenvalues of the quadratic pencil nearest a complex shift.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// How many eigenvalues (default 40).
        #[arg(long)]
        count: Option<usize>,
        /// Real part of the shift (default 0).
        #[arg(long)]
        shift_re: Option<f64>,
        /// Imaginary part of the shift (default 5).
        #[arg(long)]
        shift_im: Option<f64>,
        /// Output path for the `re_mu,im_mu,residual` CSV.
        #[arg(long)]
        spectrum_out: PathBuf,
    },
    /// Resolvent norms over a log-spaced frequency band.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Lowest frequency (default 1).
        #[arg(long)]
        omega_min: Option<f64>,
        /// Highest frequency (default 20).
        #[arg(long)]
        omega_max: Option<f64>,
        /// Number of samples (default 60, minimum 8).
        #[arg(long)]
        samples: Option<usize>,
        /// Worker threads for the sweep (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output path for the `omega,norm,scaled,iters` CSV.
        #[arg(long)]
        sweep_out: PathBuf,
    },
    /// Check the multiplier-field hypotheses and print a key=value
    /// report (exit 0 whether or not the hypotheses hold).
    CheckH {
        #[command(flatten)]
        common: Common,
        /// Candidate field: radial, rotation, or levelset (default radial).
        #[arg(long)]
        field: Option<String>,
        /// Relative tangency tolerance (default 1e-3, polygonal).
        #[arg(long)]
        parallel_tol: Option<f64>,
        /// Optional copy of the report next to the samples.
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Optional per-sample CSV.
        #[arg(long)]
        samples_out: Option<PathBuf>,
    },
}

/// Failures separated by exit status: flag/config problems never touch
/// the filesystem.
enum Failure {
    Validation(String),
    Computation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Validation(e.to_string()),
            other => Failure::Computation(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Computation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("invalid configuration: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Mesh { common, mesh_out, dump_matrices } => {
            let (resolved, file) = resolve(&common, "mesh")?;
            let mesh = build_mesh(&resolved)?;
            let _ = file;
            let sys = match &dump_matrices {
                Some(_) => Some(build_system(&mesh, resolved.alpha)?),
                None => None,
            };
            let mut body = Vec::new();
            mesh.write_text(&mut body).map_err(|e| Failure::Computation(e.to_string()))?;
            write_artifact(&mesh_out, &body, "mesh", &resolved, &[])?;
            if let (Some(dir), Some(sys)) = (dump_matrices, sys) {
                sys.dump_matrices(&dir)?;
                let meta = render_meta("mesh --dump-matrices", &resolved, &[]);
                std::fs::write(dir.join("meta"), meta)
                    .map_err(|e| Failure::Computation(e.to_string()))?;
                eprintln!("matrices dumped to {}", dir.display());
            }
            eprintln!(
                "mesh: {} nodes, {} triangles, h in [{:.4}, {:.4}]",
                mesh.node_count(),
                mesh.triangle_count(),
                mesh.h_min(),
                mesh.h_max()
            );
            Ok(())
        }
        Command::Simulate {
            common,
            t_final,
            dt,
            smooth_k,
            fit_t0,
            fit_t1,
            trace_out,
            state_out,
        } => {
            let (resolved, file) = resolve(&common, "simulate")?;
            let t_final = t_final.or(file.t_final).unwrap_or(50.0);
            let dt_flag = dt.or(file.dt);
            let smooth_k = smooth_k.or(file.smooth_k).unwrap_or(2);
            let fit_t0 = fit_t0.or(file.fit_t0);
            let fit_t1 = fit_t1.or(file.fit_t1);
            for (name, v) in [("fit-t0", fit_t0), ("fit-t1", fit_t1)] {
                if let Some(v) = v {
                    if !(v > 0.0) {
                        return Err(Failure::Validation(format!("--{name} must be positive, got {v}")));
                    }
                }
            }
            if let (Some(a), Some(b)) = (fit_t0, fit_t1) {
                if a >= b {
                    return Err(Failure::Validation(format!(
                        "fit window is empty: fit-t0 = {a}, fit-t1 = {b}"
                    )));
                }
            }
            let mesh = build_mesh(&resolved)?;
            let dt = dt_flag.unwrap_or_else(|| mesh.h_min() / 2.0);
            let gen = Generator::new(build_system(&mesh, resolved.alpha)?)?;
            let mut rng = ChaCha8Rng::seed_from_u64(resolved.seed);
            let raw = State::random(gen.n(), &mut rng);
            let (x0, graph_norm) = smooth_data(&gen, &raw, smooth_k)?;
            let (trace, final_state) = simulate(&gen, &x0, t_final, dt)?;
            let mut body = Vec::new();
            trace
                .write_csv(&mut body)
                .map_err(|e| Failure::Computation(e.to_string()))?;
            let extra = [
                ("T".to_string(), format!("{t_final}")),
                ("dt".to_string(), format!("{dt}")),
                ("smooth_k".to_string(), format!("{smooth_k}")),
            ];
            write_artifact(&trace_out, &body, "simulate", &resolved, &extra)?;
            if let Some(path) = state_out {
                write_artifact(&path, &state_csv(&final_state), "simulate", &resolved, &extra)?;
            }
            let e0 = trace.energy[0];
            let e_end = *trace.energy.last().unwrap();
            eprintln!(
                "simulate: {} steps, E0 = {e0:.6e}, E(T) = {e_end:.6e}, graph norm {graph_norm:.6e}, balance defect {:.2e}",
                trace.times.len() - 1,
                trace.balance_defect()
            );
            let window = (fit_t0.unwrap_or(5.0 * (resolved.r1 - resolved.r0)), fit_t1.unwrap_or(t_final));
            match fit_decay(&trace, window) {
                Ok(fit) => eprintln!(
                    "decay fit on [{}, {}]: exponent {:.3}, sup tE = {:.4e}, rms residual {:.2e}",
                    window.0, window.1, fit.exponent, fit.sup_te, fit.fit_residual
                ),
                Err(e) => eprintln!("decay fit skipped: {e}"),
            }
            Ok(())
        }
        Command::Spectrum { common, count, shift_re, shift_im, spectrum_out } => {
            let (resolved, file) = resolve(&common, "spectrum")?;
            let count = count.or(file.count).unwrap_or(40);
            let shift = Complex64::new(
                shift_re.or(file.shift_re).unwrap_or(0.0),
                shift_im.or(file.shift_im).unwrap_or(5.0),
            );
            let mesh = build_mesh(&resolved)?;
            let gen = Generator::new(build_system(&mesh, resolved.alpha)?)?;
            let spec = quadratic_eigs(&gen, count, shift)?;
            let mut body = String::from("re_mu,im_mu,residual\n");
            for (mu, res) in spec.eigenvalues.iter().zip(spec.residuals.iter()) {
                body.push_str(&format!("{},{},{}\n", mu.re, mu.im, res));
            }
            let extra = [
                ("count".to_string(), format!("{count}")),
                ("shift".to_string(), format!("{}+{}i", shift.re, shift.im)),
            ];
            write_artifact(&spectrum_out, body.as_bytes(), "spectrum", &resolved, &extra)?;
            eprintln!(
                "spectrum: {} eigenvalues near {shift}, min Re = {:.6e}",
                spec.eigenvalues.len(),
                spec.min_real_part
            );
            Ok(())
        }
        Command::Sweep { common, omega_min, omega_max, samples, jobs, sweep_out } => {
            let (resolved, file) = resolve(&common, "sweep")?;
            let omega_min = omega_min.or(file.omega_min).unwrap_or(1.0);
            let omega_max = omega_max.or(file.omega_max).unwrap_or(20.0);
            let samples = samples.or(file.samples).unwrap_or(60);
            let jobs = jobs.or(file.jobs);
            let mesh = build_mesh(&resolved)?;
            let gen = Generator::new(build_system(&mesh, resolved.alpha)?)?;
            let sweep = match jobs {
                Some(j) => {
                    if j == 0 {
                        return Err(Failure::Validation("--jobs must be at least 1".into()));
                    }
                    let pool = rayon::ThreadPoolBuilder::new()
                        .num_threads(j)
                        .build()
                        .map_err(|e| Failure::Computation(e.to_string()))?;
                    pool.install(|| resolvent_sweep(&gen, omega_min, omega_max, samples))?
                }
                None => resolvent_sweep(&gen, omega_min, omega_max, samples)?,
            };
            let mut body = String::from("omega,norm,scaled,iters\n");
            for s in &sweep.samples {
                body.push_str(&format!(
                    "{},{},{},{}\n",
                    s.omega,
                    s.norm,
                    s.norm / (s.omega * s.omega),
                    s.iterations
                ));
            }
            let extra = [
                ("omega_min".to_string(), format!("{omega_min}")),
                ("omega_max".to_string(), format!("{omega_max}")),
                ("samples".to_string(), format!("{samples}")),
            ];
            write_artifact(&sweep_out, body.as_bytes(), "sweep", &resolved, &extra)?;
            eprintln!(
                "sweep: slope over {} peaks = {:.3}, sup norm/omega^2 = {:.4e}",
                sweep.peaks_used, sweep.slope, sweep.sup_scaled
            );
            Ok(())
        }
        Command::CheckH { common, field, parallel_tol, report_out, samples_out } => {
            let (resolved, file) = resolve(&common, "check-h")?;
            let field_name = field.or(file.field).unwrap_or_else(|| "radial".to_string());
            let rel_tol = parallel_tol
                .or(file.parallel_tol)
                .unwrap_or(wavebc::multiplier::POLYGONAL_PARALLEL_TOL);
            let (mesh, vf) = match field_name.as_str() {
                "radial" => (build_mesh(&resolved)?, VectorField::radial()),
                "rotation" => (build_mesh(&resolved)?, VectorField::rotation()),
                "levelset" => {
                    let domain = annulus_levelset(resolved.r0, resolved.r1);
                    let mesh = build_levelset_mesh(&domain, resolved.nr, resolved.ntheta)?;
                    (mesh, levelset_field(&domain))
                }
                other => {
                    return Err(Failure::Validation(format!(
                        "unknown field '{other}' (expected radial, rotation, or levelset)"
                    )))
                }
            };
            let report = check_hypotheses_with_tol(&vf, &mesh, rel_tol)?;
            let block = format!(
                "rho = {}\nrho_argmin_x = {}\nrho_argmin_y = {}\nparallel_residual = {}\ninner_max_normal = {}\nouter_min_normal = {}\nfield_scale = {}\nparallel_tol = {}\njacobian_from_fd = {}\nbulk_ok = {}\ninner_ok = {}\nouter_ok = {}\nall_ok = {}\n",
                report.rho,
                report.rho_argmin[0],
                report.rho_argmin[1],
                report.parallel_residual,
                report.inner_max_normal,
                report.outer_min_normal,
                report.field_scale,
                report.parallel_tol,
                report.jacobian_from_fd,
                report.bulk_ok,
                report.inner_ok,
                report.outer_ok,
                report.all_ok()
            );
            print!("{block}");
            let extra = [("field".to_string(), field_name.clone())];
            if let Some(path) = report_out {
                write_artifact(&path, block.as_bytes(), "check-h", &resolved, &extra)?;
            }
            if let Some(path) = samples_out {
                let rows = hypothesis_samples(&vf, &mesh)?;
                let mut body = String::from("kind,x,y,h_x,h_y,lambda_min,h_dot_nu,parallel_defect\n");
                let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
                for r in &rows {
                    let kind = match r.kind {
                        SampleKind::Bulk => "bulk",
                        SampleKind::InnerBoundary => "gamma0",
                        SampleKind::OuterBoundary => "gamma1",
                    };
                    body.push_str(&format!(
                        "{kind},{},{},{},{},{},{},{}\n",
                        r.point[0],
                        r.point[1],
                        r.h[0],
                        r.h[1],
                        fmt(r.lambda_min),
                        fmt(r.h_dot_nu),
                        fmt(r.parallel_defect)
                    ));
                }
                write_artifact(&path, body.as_bytes(), "check-h", &resolved, &extra)?;
            }
            Ok(())
        }
    }
}

/// Merges flags with the optional config file and fills geometry
/// defaults; validates nothing beyond shapes (the library enforces the
/// numeric preconditions before any artifact is written).
fn resolve(common: &Common, invoked: &str) -> Result<(Resolved, FileConfig), Failure> {
    let file = match &common.config {
        Some(path) => {
            let cfg = FileConfig::load(path).map_err(Failure::Validation)?;
            cfg.check_command(invoked).map_err(Failure::Validation)?;
            cfg
        }
        None => FileConfig::default(),
    };
    let resolved = Resolved {
        r0: common.r0.or(file.r0).unwrap_or(1.0),
        r1: common.r1.or(file.r1).unwrap_or(2.0),
        nr: common.nr.or(file.nr).unwrap_or(8),
        ntheta: common.ntheta.or(file.ntheta).unwrap_or(32),
        alpha: common.alpha.or(file.alpha).unwrap_or(1.0),
        seed: common.seed.or(file.seed).unwrap_or(0),
    };
    Ok((resolved, file))
}

fn build_mesh(r: &Resolved) -> Result<Mesh, Failure> {
    Ok(build_annulus_mesh(r.r0, r.r1, r.nr, r.ntheta)?)
}

fn state_csv(x: &State) -> Vec<u8> {
    let mut body = String::from("node,re_u,im_u,re_v,im_v\n");
    for i in 0..x.u.len() {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            i, x.u[i].re, x.u[i].im, x.v[i].re, x.v[i].im
        ));
    }
    body.into_bytes()
}

fn render_meta(command: &str, resolved: &Resolved, extra: &[(String, String)]) -> String {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut out = format!(
        "tool = wavebc {}\ncommand = {command}\ngenerated_at_unix = {stamp}\n",
        env!("CARGO_PKG_VERSION")
    );
    for (k, v) in resolved.meta_lines() {
        out.push_str(&format!("{k} = {v}\n"));
    }
    for (k, v) in extra {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

/// Writes the artifact and its `.meta` sidecar. Nothing reaches the
/// filesystem before this point, so validation failures leave no trace.
fn write_artifact(
    path: &Path,
    body: &[u8],
    command: &str,
    resolved: &Resolved,
    extra: &[(String, String)],
) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Computation(e.to_string()))?;
        }
    }
    std::fs::write(path, body).map_err(|e| Failure::Computation(e.to_string()))?;
    let meta_path = {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    };
    std::fs::write(meta_path, render_meta(command, resolved, extra))
        .map_err(|e| Failure::Computation(e.to_string()))?;
    Ok(())
}
