use std::f64::consts::PI;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use qwalk_core::cayley::{in_brillouin, QuotientLattice};
use qwalk_core::evolve::{gaussian_packet_momentum, observables, write_snapshot};
use qwalk_core::photon::{maxwell_study, DEFAULT_GRID_RADIUS};
use qwalk_core::reference::{continuum_evolve, discrepancy, fit_exponent, ContinuumSpec};
use qwalk_core::symmetry::{orbit, Gauge, OrbitFamily, DEFAULT_ORBIT_SAMPLES};
use qwalk_core::walks::{
    dispersion, group_velocity, helicity, search_isotropy_representation, spectrum_residual,
    transition_matrices, verify_isotropy, verify_unitarity, weyl_isotropy_action, ISOTROPY_TOLERANCE,
    UNITARITY_TOLERANCE,
};
use qwalk_core::{Branch, Direction, Evolver, WalkKind, WavePacketSpec};

use crate::config::{vec3, ConfigFile, WalkArgs};
use crate::output::{Cell, Table};
use crate::CliError;

/// Tolerance for the sampled spectrum check.
pub const SPECTRUM_TOLERANCE: f64 = 1e-10;
/// Number of random momenta in the spectrum check.
pub const SPECTRUM_SAMPLES: usize = 1000;

/// What a command produced.
pub enum Outcome {
    Table(Table),
    Report { table: Table, json: serde_json::Value, failure: Option<String> },
}

fn core(e: qwalk_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

// ---------------------------------------------------------------- verify

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct VerifyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub walk: WalkArgs,
    /// Scale the positive-generator matrices by 1 + perturb before checking.
    #[arg(long)]
    pub perturb: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct CheckRow {
    check: &'static str,
    condition: String,
    residual: f64,
    tolerance: f64,
    pass: bool,
}

pub fn verify(flags: VerifyArgs, file: &ConfigFile, seed: u64) -> Result<Outcome, CliError> {
    let from_file: VerifyArgs = file.get()?;
    let walk = flags.walk.merge(from_file.walk);
    let kind = walk.kind("weyl+")?;
    let perturb = flags.perturb.or(from_file.perturb).unwrap_or(0.0);
    if !perturb.is_finite() || perturb <= -1.0 {
        return Err(CliError::Usage(format!("perturb {perturb} must exceed -1")));
    }
    let mut set = transition_matrices(kind);
    if perturb != 0.0 {
        set = set.perturbed(1.0 + perturb);
    }

    let mut rows = Vec::new();
    let unitarity = verify_unitarity(&set);
    for c in unitarity.conditions {
        rows.push(CheckRow {
            check: "unitarity",
            pass: c.residual < UNITARITY_TOLERANCE,
            condition: c.condition,
            residual: c.residual,
            tolerance: UNITARITY_TOLERANCE,
        });
    }

    if !kind.is_dirac() {
        let action = if kind == WalkKind::WeylPlus {
            Some(weyl_isotropy_action())
        } else {
            search_isotropy_representation(&set)
        };
        match action {
            Some(action) => {
                let r = verify_isotropy(&set, &action).map_err(core)?;
                for c in r.conditions {
                    rows.push(CheckRow {
                        check: "isotropy",
                        pass: c.residual < ISOTROPY_TOLERANCE,
                        condition: c.condition,
                        residual: c.residual,
                        tolerance: ISOTROPY_TOLERANCE,
                    });
                }
            }
            None => rows.push(CheckRow {
                check: "isotropy",
                condition: "no signed Pauli representation of the Klein action".into(),
                residual: f64::INFINITY,
                tolerance: ISOTROPY_TOLERANCE,
                pass: false,
            }),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut drawn = 0;
    while drawn < SPECTRUM_SAMPLES {
        let k = [rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI)];
        if !in_brillouin(k) {
            continue;
        }
        worst = worst.max(spectrum_residual(kind, k).map_err(core)?);
        drawn += 1;
    }
    rows.push(CheckRow {
        check: "spectrum",
        condition: format!("eigenvalues at {SPECTRUM_SAMPLES} random momenta"),
        residual: worst,
        tolerance: SPECTRUM_TOLERANCE,
        pass: worst < SPECTRUM_TOLERANCE,
    });

    let failure = rows
        .iter()
        .filter(|r| !r.pass)
        .max_by(|a, b| (a.residual / a.tolerance).total_cmp(&(b.residual / b.tolerance)))
        .map(|r| format!("{}: {}", r.check, r.condition));
    let pass = failure.is_none();
    let mut table = Table::new(&["check", "condition", "residual", "tolerance", "pass"]);
    for r in &rows {
        table.push(vec![
            r.check.into(),
            r.condition.as_str().into(),
            r.residual.into(),
            r.tolerance.into(),
            r.pass.into(),
        ]);
    }
    let json = serde_json::json!({
        "walk": kind.name(),
        "perturb": perturb,
        "pass": pass,
        "failing_condition": failure,
        "conditions": rows.iter().map(|r| serde_json::json!({
            "check": r.check,
            "condition": r.condition,
            "residual": crate::output::fmt_float(r.residual),
            "tolerance": r.tolerance,
            "pass": r.pass,
        })).collect::<Vec<_>>(),
    });
    Ok(Outcome::Report { table, json, failure })
}

// ------------------------------------------------------------ dispersion

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct DispersionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub walk: WalkArgs,
    /// Points per generator direction; the grid is the momentum grid of the
    /// period-`grid` quotient lattice, folded into the zone.
    #[arg(long)]
    pub grid: Option<usize>,
}

pub const DISPERSION_HEADER: [&str; 10] = ["kx", "ky", "kz", "omega", "nx", "ny", "nz", "vx", "vy", "vz"];

pub fn dispersion_table(flags: DispersionArgs, file: &ConfigFile) -> Result<Outcome, CliError> {
    let from_file: DispersionArgs = file.get()?;
    let kind = flags.walk.merge(from_file.walk).kind("weyl+")?;
    let grid = flags.grid.or(from_file.grid).unwrap_or(32);
    if grid < 2 {
        return Err(CliError::Usage(format!("grid resolution {grid} must be at least 2")));
    }
    let lattice = QuotientLattice::new(grid).map_err(core)?;
    let mut table = Table::new(&DISPERSION_HEADER);
    for a in 0..grid {
        for b in 0..grid {
            for c in 0..grid {
                let k = lattice.momentum([a, b, c]).get();
                let omega = dispersion(kind, k).map_err(core)?;
                let n = helicity(kind, k).unwrap_or([f64::NAN; 3]);
                let v = group_velocity(kind, k).unwrap_or([f64::NAN; 3]);
                let mut row: Vec<Cell> = k.iter().map(|&x| x.into()).collect();
                row.push(omega.into());
                row.extend(n.iter().map(|&x| Cell::from(x)));
                row.extend(v.iter().map(|&x| Cell::from(x)));
                table.push(row);
            }
        }
    }
    Ok(Outcome::Table(table))
}

// ---------------------------------------------------------------- evolve

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchArg {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct EvolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub walk: WalkArgs,
    /// Lattice period N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Momentum width of the Gaussian packet.
    #[arg(long)]
    pub sigma_k: Option<f64>,
    /// Packet centre momentum, `kx,ky,kz`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub k0: Option<Vec<f64>>,
    /// Number of steps T.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub branch: Option<BranchArg>,
    /// Add the walk-vs-continuum discrepancy columns.
    #[arg(long)]
    pub reference: bool,
    /// Write the final field as a binary snapshot.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
}

pub fn evolve(flags: EvolveArgs, file: &ConfigFile) -> Result<Outcome, CliError> {
    let from_file: EvolveArgs = file.get()?;
    let kind = flags.walk.merge(from_file.walk).kind("weyl+")?;
    let n = flags.n.or(from_file.n).unwrap_or(32);
    let sigma = flags.sigma_k.or(from_file.sigma_k).unwrap_or(0.05);
    let k0 = match flags.k0.or(from_file.k0) {
        Some(v) => vec3(&v, "k0")?,
        None => [0.0; 3],
    };
    let steps = flags.steps.or(from_file.steps).unwrap_or(32);
    let branch = match flags.branch.or(from_file.branch).unwrap_or(BranchArg::Positive) {
        BranchArg::Positive => Branch::Positive,
        BranchArg::Negative => Branch::Negative,
    };
    let reference = flags.reference || from_file.reference;
    let snapshot = flags.snapshot.or(from_file.snapshot);

    let lattice = QuotientLattice::new(n).map_err(core)?;
    let spec = WavePacketSpec::new(k0, sigma, branch, kind).map_err(core)?;
    let psi0 = gaussian_packet_momentum(&spec, lattice).map_err(core)?;
    let evolver = Evolver::new(kind, lattice);

    let mut header = vec!["t", "norm", "x", "y", "z", "sx", "sy", "sz"];
    if reference {
        header.extend(["discrepancy", "fidelity", "fitted_exponent"]);
    }
    let mut table = Table::new(&header);
    let (mut ts, mut ds) = (Vec::new(), Vec::new());
    let mut f = psi0.clone();
    for t in 0..=steps {
        let pos = evolver.to_position(&f).map_err(core)?;
        let o = observables(&pos).map_err(core)?;
        let mut row: Vec<Cell> = vec![t.into(), o.norm.into()];
        row.extend(o.mean_position.iter().map(|&x| Cell::from(x)));
        row.extend(o.spread.iter().map(|&x| Cell::from(x)));
        if reference {
            let cont = continuum_evolve(&psi0, &ContinuumSpec { kind, time: t as f64 }).map_err(core)?;
            let d = discrepancy(&f, &cont).map_err(core)?;
            if t > 0 {
                ts.push(t as f64);
                ds.push(d.l2);
            }
            row.extend([d.l2.into(), d.fidelity.into(), fit_exponent(&ts, &ds).into()]);
        }
        table.push(row);
        if t < steps {
            f = evolver.step(&f, Direction::Forward).map_err(core)?;
        }
    }
    if let Some(path) = snapshot {
        let pos = evolver.to_position(&f).map_err(core)?;
        let file = std::fs::File::create(&path)
            .map_err(|e| CliError::Failure(format!("cannot write snapshot {}: {e}", path.display())))?;
        write_snapshot(&pos, std::io::BufWriter::new(file))
            .map_err(|e| CliError::Failure(format!("cannot write snapshot {}: {e}", path.display())))?;
    }
    Ok(Outcome::Table(table))
}

// ----------------------------------------------------------------- orbit

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Rotation,
    Boost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaugeArg {
    Phase,
    Unit,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct OrbitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub walk: WalkArgs,
    /// Starting momentum, `kx,ky,kz`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub k0: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Rotation or boost axis, `x,y,z`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub axis: Option<Vec<f64>>,
    /// Largest rapidity of a boost orbit.
    #[arg(long)]
    pub max_rapidity: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum)]
    pub gauge: Option<GaugeArg>,
}

pub const ORBIT_HEADER: [&str; 6] = ["param", "kx", "ky", "kz", "omega", "domain_flag"];

pub fn orbit_table(flags: OrbitArgs, file: &ConfigFile) -> Result<Outcome, CliError> {
    let from_file: OrbitArgs = file.get()?;
    let kind = flags.walk.merge(from_file.walk).kind("weyl+")?;
    let k0 = match flags.k0.or(from_file.k0) {
        Some(v) => vec3(&v, "k0")?,
        None => [0.3, 0.1, 0.2],
    };
    let axis = match flags.axis.or(from_file.axis) {
        Some(v) => vec3(&v, "axis")?,
        None => [0.0, 0.0, 1.0],
    };
    let family = match flags.family.or(from_file.family).unwrap_or(FamilyArg::Rotation) {
        FamilyArg::Rotation => OrbitFamily::Rotation { axis },
        FamilyArg::Boost => OrbitFamily::Boost {
            axis,
            max_rapidity: flags.max_rapidity.or(from_file.max_rapidity).unwrap_or(1.0),
        },
    };
    let samples = flags.samples.or(from_file.samples).unwrap_or(DEFAULT_ORBIT_SAMPLES);
    let gauge = match flags.gauge.or(from_file.gauge).unwrap_or(GaugeArg::Phase) {
        GaugeArg::Phase => Gauge::Phase,
        GaugeArg::Unit => Gauge::Unit,
    };
    let points = orbit(kind, k0, &family, samples, gauge).map_err(core)?;
    let mut table = Table::new(&ORBIT_HEADER);
    for p in points {
        table.push(vec![
            p.param.into(),
            p.k[0].into(),
            p.k[1].into(),
            p.k[2].into(),
            p.omega.into(),
            p.in_domain.into(),
        ]);
    }
    Ok(Outcome::Table(table))
}

// --------------------------------------------------------------- maxwell

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct MaxwellArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub walk: WalkArgs,
    /// Total photon momentum, `kx,ky,kz`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub k: Option<Vec<f64>>,
    /// Weight widths, one ladder rung each.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Half-width of the relative-momentum grid in grid steps.
    #[arg(long)]
    pub radius: Option<usize>,
}

pub const MAXWELL_HEADER: [&str; 6] = [
    "sigma_f",
    "k_norm",
    "dynamic_residual",
    "transversality_residual",
    "commutator_diag",
    "commutator_offdiag",
];

pub fn maxwell_table(flags: MaxwellArgs, file: &ConfigFile) -> Result<Outcome, CliError> {
    let from_file: MaxwellArgs = file.get()?;
    let kind = flags.walk.merge(from_file.walk).kind("weyl-")?;
    let k = match flags.k.or(from_file.k) {
        Some(v) => vec3(&v, "k")?,
        None => {
            let d: [f64; 3] = [1.0, 0.6, 0.3];
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            d.map(|x| 0.1 * x / len)
        }
    };
    let sigmas = flags.sigmas.or(from_file.sigmas).unwrap_or_else(|| vec![0.05 * PI, 0.025 * PI, 0.0125 * PI]);
    let steps = flags.steps.or(from_file.steps).unwrap_or(4);
    let radius = flags.radius.or(from_file.radius).unwrap_or(DEFAULT_GRID_RADIUS);
    let rows = maxwell_study(kind, k, &sigmas, steps, radius).map_err(core)?;
    let mut table = Table::new(&MAXWELL_HEADER);
    for r in rows {
        table.push(vec![
            r.sigma_f.into(),
            r.k_norm.into(),
            r.dynamic_residual.into(),
            r.transversality_residual.into(),
            r.commutator_diag.into(),
            r.commutator_offdiag.into(),
        ]);
    }
    Ok(Outcome::Table(table))
}
