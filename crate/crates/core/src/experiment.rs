//! Scenario files, the end-to-end design pipeline, parameter sweeps and
//! flat-file outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use isac_conic::{write_problem, SolverSettings};
use serde::{Deserialize, Serialize};

use crate::array::{generate_channels, ArrayGeometry, ChannelModel, ChannelSet};
use crate::echo::{monte_carlo_run, DirectionEstimator, RunOutcome, SimConfig};
use crate::error::{Error, Result};
use crate::fim::{closed_form_terms, compute_z2, crb_phi_closed_form, crb_phi_oracle, CMat, SensingParams};
use crate::geometry::{compute_los_partition, global_point, ContourModel, JacobianMode, LosPartition, TargetPose};
use crate::par::{map_indexed, ExecMode};
use crate::sdr::{
    build_beampattern_problem, build_sdr_problem, coverage_margin, extract_rank_one, fill_power, sinr, solve_sdr,
    BeamformerSet, BeampatternSpec, DesignConstraints, DesignVariant, EpochStats, ExtractionSettings, Scoring,
    SdrSolution,
};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub n_t: usize,
    pub n_r: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self { n_t: 16, n_r: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsersConfig {
    pub angles_deg: Vec<f64>,
    pub gamma_db: f64,
    pub noise_dbm: f64,
    pub channel: ChannelModel,
}

impl Default for UsersConfig {
    fn default() -> Self {
        Self {
            angles_deg: vec![-60.0, -35.0, 35.0, 60.0],
            gamma_db: 5.0,
            noise_dbm: -80.0,
            channel: ChannelModel::LosOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub pt_dbw: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self { pt_dbw: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub d_o_m: f64,
    pub phi_o_deg: f64,
    pub varphi_deg: f64,
    pub k: usize,
    pub q: usize,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub t_s_s: f64,
    pub noise_dbm: f64,
    pub bandwidth_hz: f64,
    pub los_samples: usize,
    pub jacobian: JacobianMode,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            d_o_m: 27.0,
            phi_o_deg: 0.0,
            varphi_deg: 0.0,
            k: 8,
            q: 8,
            m: vec![2.05, -0.002, 0.5, 0.0, 0.056, 0.001, -0.125, 0.003],
            n: vec![1.24, -0.001, 0.335, -0.001, 0.124, -0.001, 0.018, 0.0],
            t_s_s: 1.0,
            noise_dbm: -80.0,
            bandwidth_hz: 1e8,
            los_samples: 4096,
            jacobian: JacobianMode::Approximate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub variant: DesignVariant,
    pub n_e: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub rank_eps: f64,
    pub coverage: bool,
    /// Scale the extracted precoder up to the full power budget.
    pub power_fill: bool,
    pub beamwidth_deg: f64,
    pub pattern_lo_deg: f64,
    pub pattern_hi_deg: f64,
    pub pattern_step_deg: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            variant: DesignVariant::CrbMin,
            n_e: 100,
            seed: 0,
            tolerance: 1e-8,
            max_iterations: 200,
            rank_eps: 1e-6,
            coverage: true,
            power_fill: true,
            beamwidth_deg: 10.0,
            pattern_lo_deg: -90.0,
            pattern_hi_deg: 90.0,
            pattern_step_deg: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub sample_rate_hz: f64,
    pub num_samples: usize,
    pub runs: usize,
    pub rcs_redraw: bool,
    /// Half-width of the estimator grid around the true direction.
    pub grid_span_deg: f64,
    pub grid_step_deg: f64,
    pub refine: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            sample_rate_hz: 2e8,
            num_samples: 256,
            runs: 200,
            rcs_redraw: true,
            grid_span_deg: 1.0,
            grid_step_deg: 0.1,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub array: ArrayConfig,
    pub users: UsersConfig,
    pub power: PowerConfig,
    pub sensing: SensingConfig,
    pub design: DesignConfig,
    pub sim: SimSettings,
}

/// Everything derived from a scenario, in SI units and radians.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: ContourModel,
    pub pose: TargetPose,
    pub partition: LosPartition,
    pub geometry: ArrayGeometry,
    pub constraints: DesignConstraints,
    pub params: SensingParams,
    pub jacobian: JacobianMode,
    pub solver: SolverSettings,
    pub extraction: ExtractionSettings,
    pub pattern: BeampatternSpec,
    pub power_fill: bool,
}

impl Resolved {
    pub fn scoring(&self) -> Scoring<'_> {
        Scoring {
            partition: &self.partition,
            geometry: &self.geometry,
            params: &self.params,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sensing;
        if s.m.len() != s.q || s.n.len() != s.q {
            return Err(Error::BadInput(format!(
                "q = {} but {} m and {} n coefficients given",
                s.q,
                s.m.len(),
                s.n.len()
            )));
        }
        if self.users.angles_deg.len() > self.array.n_t {
            return Err(Error::BadInput("more users than transmit antennas".into()));
        }
        for (name, v) in [
            ("gamma_db", self.users.gamma_db),
            ("noise_dbm", self.users.noise_dbm),
            ("pt_dbw", self.power.pt_dbw),
            ("sensing noise_dbm", s.noise_dbm),
        ] {
            if !v.is_finite() {
                return Err(Error::BadInput(format!("{name} is not finite")));
            }
        }
        if self.design.n_e == 0 {
            return Err(Error::BadInput("n_e must be at least 1".into()));
        }
        if !(self.design.tolerance > 0.0) {
            return Err(Error::BadInput("tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, mode: ExecMode) -> Result<Resolved> {
        self.validate()?;
        let s = &self.sensing;
        let model = ContourModel::new(s.m.clone(), s.n.clone())?;
        let pose = TargetPose::new(s.d_o_m, s.phi_o_deg.to_radians(), s.varphi_deg.to_radians())?;
        let partition = compute_los_partition(&model, &pose, s.k, s.los_samples)?;
        if !partition.contiguous {
            log::warn!("visible contour has several components; only the largest is used");
        }
        let geometry = ArrayGeometry::new(self.array.n_t, self.array.n_r)?;
        let angles: Vec<f64> = self.users.angles_deg.iter().map(|a| a.to_radians()).collect();
        let channels = if angles.is_empty() {
            ChannelSet {
                h: Vec::new(),
                noise: Vec::new(),
            }
        } else {
            generate_channels(
                &geometry,
                &angles,
                dbm_to_watts(self.users.noise_dbm),
                self.users.channel,
                self.design.seed,
            )?
        };
        let constraints = DesignConstraints::new(
            db_to_linear(self.power.pt_dbw),
            db_to_linear(self.users.gamma_db),
            self.design.coverage,
            channels,
        )?;
        let params = SensingParams::new(
            1.0 / (s.d_o_m * s.d_o_m),
            dbm_to_watts(s.noise_dbm),
            s.t_s_s,
            s.bandwidth_hz,
        )?;
        let d = &self.design;
        let pattern = BeampatternSpec::uniform(
            pose.phi_o,
            d.beamwidth_deg,
            d.pattern_lo_deg,
            d.pattern_hi_deg,
            d.pattern_step_deg,
        )?;
        Ok(Resolved {
            model,
            pose,
            partition,
            geometry,
            constraints,
            params,
            jacobian: s.jacobian,
            solver: SolverSettings {
                tolerance: d.tolerance,
                max_iterations: d.max_iterations,
            },
            extraction: ExtractionSettings {
                epochs: d.n_e,
                seed: d.seed,
                rank_eps: d.rank_eps,
                mode,
            },
            pattern,
            power_fill: d.power_fill,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSummary {
    pub status: String,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub audit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport {
    pub variant: String,
    pub status: String,
    pub provenance: String,
    /// Optimal value of the relaxed problem in its own units.
    pub sdr_objective: f64,
    pub crb_rad2: f64,
    pub crb_db: f64,
    pub crb_oracle_rad2: Option<f64>,
    pub sinr_db: Vec<f64>,
    pub sinr_margin_db: Option<f64>,
    pub power_w: f64,
    pub coverage_margin: f64,
    pub sdr_rank_one: Vec<bool>,
    pub epochs: EpochStats,
    pub solver: SolverSummary,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub set: BeamformerSet,
    pub solution: SdrSolution,
    pub report: DesignReport,
}

/// Relaxed solve, rank-one extraction, epoch selection and (optionally)
/// power fill for one design variant.
pub fn run_design(res: &Resolved, variant: DesignVariant, dump: Option<&Path>) -> Result<DesignOutcome> {
    let start = Instant::now();
    let prob = match variant {
        DesignVariant::CrbMin => build_sdr_problem(&res.partition, &res.geometry, &res.constraints)?,
        _ => build_beampattern_problem(variant, &res.geometry, &res.constraints, &res.pattern)?,
    };
    if let Some(path) = dump {
        fs::write(path, write_problem(&prob.problem))?;
    }
    let solution = solve_sdr(&prob, &res.solver, res.extraction.rank_eps)?;
    let mut set = extract_rank_one(&solution, &res.constraints, &res.scoring(), &res.extraction)?;
    if res.power_fill {
        fill_power(&mut set, res.constraints.p_t);
    }
    let rx = set.covariance();
    let crb = crb_phi_closed_form(&res.partition, &rx, &res.params, &res.geometry)?;
    let oracle = crb_phi_oracle(&res.partition, &res.pose, &rx, &res.params, &res.geometry, res.jacobian).ok();
    let sinr_db: Vec<f64> = sinr(&set.w, &res.constraints.channels)
        .into_iter()
        .map(linear_to_db)
        .collect();
    let gamma_db = linear_to_db(res.constraints.gamma);
    let margin = sinr_db.iter().cloned().reduce(f64::min).map(|m| m - gamma_db);
    let s = &solution.solver;
    let report = DesignReport {
        variant: variant.as_str().into(),
        status: "optimal".into(),
        provenance: set.provenance.label(),
        sdr_objective: solution.objective,
        crb_rad2: crb,
        crb_db: linear_to_db(crb),
        crb_oracle_rad2: oracle,
        sinr_db,
        sinr_margin_db: margin,
        power_w: set.power(),
        coverage_margin: coverage_margin(&rx, &res.partition, &res.geometry),
        sdr_rank_one: solution.rank_one.clone(),
        epochs: set.stats,
        solver: SolverSummary {
            status: s.status.as_str().into(),
            iterations: s.iterations,
            primal_residual: s.primal_residual,
            dual_residual: s.dual_residual,
            duality_gap: s.duality_gap,
            audit: s.audit,
        },
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(DesignOutcome { set, solution, report })
}

/// Short machine-readable failure label.
pub fn status_label(e: &Error) -> &'static str {
    match e.exit_code() {
        2 => "infeasible",
        3 => "numerical-failure",
        _ => "bad-input",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "N_t")]
    Nt,
    C,
    #[serde(rename = "Gamma_dB")]
    GammaDb,
    #[serde(rename = "P_t_dBW")]
    PtDbw,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Nt => "N_t",
            SweepAxis::C => "C",
            SweepAxis::GammaDb => "Gamma_dB",
            SweepAxis::PtDbw => "P_t_dBW",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N_t" | "nt" => Ok(SweepAxis::Nt),
            "C" | "c" => Ok(SweepAxis::C),
            "Gamma_dB" | "gamma" => Ok(SweepAxis::GammaDb),
            "P_t_dBW" | "pt" => Ok(SweepAxis::PtDbw),
            _ => Err(Error::BadInput(format!("unknown sweep axis {s:?}"))),
        }
    }
}

/// User directions added in order when the C axis grows past the scenario's
/// own users.
pub const EXTRA_USER_ANGLES_DEG: [f64; 8] = [-60.0, -35.0, 35.0, 60.0, -80.0, 80.0, -20.0, 20.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub variants: Vec<DesignVariant>,
}

impl SweepSpec {
    pub fn all_variants(axis: SweepAxis, values: Vec<f64>) -> Self {
        Self {
            axis,
            values,
            variants: vec![DesignVariant::CrbMin, DesignVariant::Bp1, DesignVariant::Bp2],
        }
    }

    pub fn validate(&self, base: &Scenario) -> Result<()> {
        if self.values.is_empty() || self.variants.is_empty() {
            return Err(Error::BadInput("sweep needs at least one value and one variant".into()));
        }
        for &v in &self.values {
            apply_axis(base, self.axis, v)?.validate()?;
        }
        Ok(())
    }
}

fn as_count(axis: SweepAxis, value: f64) -> Result<usize> {
    if value >= 0.0 && value.fract() == 0.0 && value < 1e6 {
        Ok(value as usize)
    } else {
        Err(Error::BadInput(format!("{} must be a whole number, got {value}", axis.as_str())))
    }
}

/// The scenario at one sweep point. `N_r` follows `N_t`.
pub fn apply_axis(base: &Scenario, axis: SweepAxis, value: f64) -> Result<Scenario> {
    let mut s = base.clone();
    match axis {
        SweepAxis::Nt => {
            let n = as_count(axis, value)?;
            if n == 0 {
                return Err(Error::BadInput("N_t must be at least 1".into()));
            }
            s.array.n_t = n;
            s.array.n_r = n;
        }
        SweepAxis::C => {
            let c = as_count(axis, value)?;
            let mut pool = base.users.angles_deg.clone();
            for a in EXTRA_USER_ANGLES_DEG {
                if !pool.contains(&a) {
                    pool.push(a);
                }
            }
            if c > pool.len() {
                return Err(Error::BadInput(format!("at most {} users are available", pool.len())));
            }
            pool.truncate(c);
            s.users.angles_deg = pool;
        }
        SweepAxis::GammaDb => s.users.gamma_db = value,
        SweepAxis::PtDbw => s.power.pt_dbw = value,
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub variant: String,
    pub status: String,
    pub crb_rad2: Option<f64>,
    pub crb_db: Option<f64>,
    pub min_sinr_db: Option<f64>,
    pub sinr_margin_db: Option<f64>,
    pub power_w: Option<f64>,
    pub coverage_margin: Option<f64>,
    pub iterations: Option<usize>,
    pub provenance: String,
    pub w_file: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "optimal"
    }
}

fn sweep_point(
    base: &Scenario,
    axis: SweepAxis,
    value: f64,
    variant: DesignVariant,
    mode: ExecMode,
    w_path: Option<&Path>,
) -> Result<(SweepRow, DesignOutcome)> {
    let res = apply_axis(base, axis, value)?.resolve(mode)?;
    let out = run_design(&res, variant, None)?;
    let mut w_file = String::new();
    if let Some(path) = w_path {
        write_w_csv(path, &out.set.w)?;
        w_file = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    let r = &out.report;
    let row = SweepRow {
        axis: axis.as_str().into(),
        value,
        variant: variant.as_str().into(),
        status: r.status.clone(),
        crb_rad2: Some(r.crb_rad2),
        crb_db: Some(r.crb_db),
        min_sinr_db: r.sinr_db.iter().cloned().reduce(f64::min),
        sinr_margin_db: r.sinr_margin_db,
        power_w: Some(r.power_w),
        coverage_margin: Some(r.coverage_margin),
        iterations: Some(r.solver.iterations),
        provenance: r.provenance.clone(),
        w_file,
    };
    Ok((row, out))
}

/// One row per `(value, variant)` in axis order. Points run on the worker
/// pool; a failing point becomes a row carrying its status. With `out` set,
/// each successful point's precoder is written next to the table.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec, mode: ExecMode, out: Option<&Path>) -> Result<Vec<SweepRow>> {
    spec.validate(base)?;
    let nv = spec.variants.len();
    let total = spec.values.len() * nv;
    Ok(map_indexed(total, mode, |i| {
        let value = spec.values[i / nv];
        let variant = spec.variants[i % nv];
        let w_path = out.map(|d| d.join(format!("w_{}_{:03}_{}.csv", spec.axis.as_str(), i / nv, variant.as_str())));
        match sweep_point(base, spec.axis, value, variant, ExecMode::Sequential, w_path.as_deref()) {
            Ok((row, _)) => row,
            Err(e) => {
                log::warn!("{} = {value}, {}: {e}", spec.axis.as_str(), variant.as_str());
                SweepRow {
                    axis: spec.axis.as_str().into(),
                    value,
                    variant: variant.as_str().into(),
                    status: status_label(&e).into(),
                    crb_rad2: None,
                    crb_db: None,
                    min_sinr_db: None,
                    sinr_margin_db: None,
                    power_w: None,
                    coverage_margin: None,
                    iterations: None,
                    provenance: String::new(),
                    w_file: String::new(),
                }
            }
        }
    }))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?)
}

/// Precoder as CSV: one row per antenna, columns `w{c}_re,w{c}_im` per user.
pub fn write_w_csv(path: &Path, w: &CMat) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    let mut header = vec!["antenna".to_string()];
    for c in 0..w.ncols() {
        header.push(format!("w{c}_re"));
        header.push(format!("w{c}_im"));
    }
    out.write_record(&header)?;
    for i in 0..w.nrows() {
        let mut rec = vec![i.to_string()];
        for c in 0..w.ncols() {
            rec.push(format!("{:e}", w[(i, c)].re));
            rec.push(format!("{:e}", w[(i, c)].im));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_w_csv(path: &Path) -> Result<CMat> {
    let mut r = csv::Reader::from_path(path)?;
    let cols = (r.headers()?.len().saturating_sub(1)) / 2;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::BadInput(format!("{}: {e}", path.display())))?;
        if vals.len() != 2 * cols {
            return Err(Error::BadInput(format!("{}: ragged row", path.display())));
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::BadInput(format!("{}: no antenna rows", path.display())));
    }
    Ok(CMat::from_fn(rows.len(), cols, |i, c| {
        num_complex::Complex64::new(rows[i][2 * c], rows[i][2 * c + 1])
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlotStyle {
    /// One `value crb_db` file per variant.
    #[default]
    Series,
    /// A single table with one CRB column per variant.
    Table,
}

impl FromStr for PlotStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "series" => Ok(PlotStyle::Series),
            "table" => Ok(PlotStyle::Table),
            _ => Err(Error::BadInput(format!("unknown plot style {s:?}"))),
        }
    }
}

fn fmt_db(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_else(|| "NaN".into())
}

/// Whitespace-separated data files for gnuplot. Failed points are `NaN`.
pub fn emit_plot_data(rows: &[SweepRow], style: PlotStyle, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut variants: Vec<&str> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for r in rows {
        if !variants.contains(&r.variant.as_str()) {
            variants.push(&r.variant);
        }
        if !values.contains(&r.value) {
            values.push(r.value);
        }
    }
    let axis = rows.first().map(|r| r.axis.as_str()).unwrap_or("value");
    let lookup = |value: f64, variant: &str| {
        rows.iter()
            .find(|r| r.value == value && r.variant == variant)
            .and_then(|r| r.crb_db)
    };
    let mut written = Vec::new();
    match style {
        PlotStyle::Series => {
            for v in &variants {
                let path = dir.join(format!("plot_{axis}_{v}.dat"));
                let mut text = format!("# {axis} crb_db ({v})\n");
                for &x in &values {
                    text.push_str(&format!("{x} {}\n", fmt_db(lookup(x, v))));
                }
                fs::write(&path, text)?;
                written.push(path);
            }
        }
        PlotStyle::Table => {
            let path = dir.join(format!("plot_{axis}.dat"));
            let mut text = format!("# {axis} {}\n", variants.join(" "));
            for &x in &values {
                let cols: Vec<String> = variants.iter().map(|v| fmt_db(lookup(x, v))).collect();
                text.push_str(&format!("{x} {}\n", cols.join(" ")));
            }
            fs::write(&path, text)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub row: usize,
    pub axis: String,
    pub value: f64,
    pub variant: String,
    pub crb_stored: f64,
    pub crb_recomputed: f64,
    pub rel_error: f64,
    pub ok: bool,
}

pub const AUDIT_TOLERANCE: f64 = 1e-9;

/// Recomputes every successful row's CRB from its stored precoder.
pub fn audit_sweep(base: &Scenario, rows: &[SweepRow], dir: &Path) -> Result<Vec<AuditRow>> {
    let mut out = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if !r.is_ok() {
            continue;
        }
        let stored = r
            .crb_rad2
            .ok_or_else(|| Error::BadInput(format!("row {i} has no CRB")))?;
        let axis = SweepAxis::from_str(&r.axis)?;
        let res = apply_axis(base, axis, r.value)?.resolve(ExecMode::Sequential)?;
        let w = read_w_csv(&dir.join(&r.w_file))?;
        if w.nrows() != res.geometry.n_t {
            return Err(Error::BadInput(format!("{}: wrong antenna count", r.w_file)));
        }
        let rx = &w * w.adjoint();
        let again = crb_phi_closed_form(&res.partition, &rx, &res.params, &res.geometry)?;
        let rel = (stored - again).abs() / again.abs();
        out.push(AuditRow {
            row: i,
            axis: r.axis.clone(),
            value: r.value,
            variant: r.variant.clone(),
            crb_stored: stored,
            crb_recomputed: again,
            rel_error: rel,
            ok: rel <= AUDIT_TOLERANCE,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrbTerm {
    pub k: usize,
    pub u: f64,
    pub phi_rad: f64,
    pub d_m: f64,
    pub l_m: f64,
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrbReport {
    pub crb_closed_rad2: f64,
    pub crb_oracle_rad2: Option<f64>,
    pub relative_gap: Option<f64>,
    pub z2: f64,
    pub u_lower: f64,
    pub u_upper: f64,
    pub visible_length_m: f64,
    pub terms: Vec<CrbTerm>,
}

/// Isotropic transmit covariance at full power.
pub fn isotropic_covariance(res: &Resolved) -> CMat {
    let n = res.geometry.n_t;
    CMat::identity(n, n) * num_complex::Complex64::new(res.constraints.p_t / n as f64, 0.0)
}

pub fn crb_breakdown(res: &Resolved, rx: &CMat) -> Result<CrbReport> {
    let terms = closed_form_terms(&res.partition, rx, &res.geometry)?;
    let closed = crb_phi_closed_form(&res.partition, rx, &res.params, &res.geometry)?;
    let oracle = crb_phi_oracle(&res.partition, &res.pose, rx, &res.params, &res.geometry, res.jacobian);
    if let Err(e) = &oracle {
        log::warn!("oracle CRB unavailable: {e}");
    }
    let oracle = oracle.ok();
    Ok(CrbReport {
        crb_closed_rad2: closed,
        crb_oracle_rad2: oracle,
        relative_gap: oracle.map(|o| (closed - o).abs() / o),
        z2: compute_z2(res.params.bandwidth),
        u_lower: res.partition.u_lower,
        u_upper: res.partition.u_upper,
        visible_length_m: res.partition.total_length(),
        terms: res
            .partition
            .subsections
            .iter()
            .zip(terms)
            .enumerate()
            .map(|(k, (s, term))| CrbTerm {
                k,
                u: s.u,
                phi_rad: s.phi,
                d_m: s.d,
                l_m: s.l,
                term,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourRow {
    pub u: f64,
    pub x_local: f64,
    pub y_local: f64,
    pub x_global: f64,
    pub y_global: f64,
    pub visible: u8,
}

pub fn contour_rows(res: &Resolved, samples: usize) -> Vec<ContourRow> {
    (0..samples)
        .map(|i| {
            let u = std::f64::consts::TAU * i as f64 / samples as f64;
            let r = res.model.point(u);
            let p = global_point(&res.model, &res.pose, u);
            ContourRow {
                u,
                x_local: r.x,
                y_local: r.y,
                x_global: p.x,
                y_global: p.y,
                visible: res.partition.contains(u) as u8,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub run: usize,
    pub estimate_rad: f64,
    pub error_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub runs: usize,
    pub mse_rad2: f64,
    pub crb_rad2: f64,
    pub ratio: f64,
    /// Observation length the CRB is evaluated with, in samples.
    pub t_s_samples: usize,
    pub grid_step_rad: f64,
}

/// Monte-Carlo direction estimation with precoder `w`. The comparison CRB
/// treats the observation length as `num_samples` unit-spaced snapshots.
pub fn simulate(scenario: &Scenario, res: &Resolved, w: &CMat, mode: ExecMode) -> Result<(Vec<SimRow>, SimSummary)> {
    let sim = &scenario.sim;
    let config = SimConfig {
        sample_rate: sim.sample_rate_hz,
        num_samples: sim.num_samples,
        seed: scenario.design.seed,
        rcs_redraw: sim.rcs_redraw,
    };
    config.validate()?;
    if sim.runs == 0 {
        return Err(Error::BadInput("runs must be at least 1".into()));
    }
    if scenario.sensing.t_s_s != sim.num_samples as f64 {
        log::warn!(
            "scenario t_s = {} differs from the simulated {} samples; the comparison CRB uses the latter",
            scenario.sensing.t_s_s,
            sim.num_samples
        );
    }
    let params = SensingParams::new(
        res.params.g,
        res.params.sigma_s2,
        sim.num_samples as f64,
        res.params.bandwidth,
    )?;
    let crb = crb_phi_closed_form(&res.partition, &(w * w.adjoint()), &params, &res.geometry)?;
    let span = sim.grid_span_deg.to_radians();
    let step = sim.grid_step_deg.to_radians();
    let phi = res.pose.phi_o;
    let estimator = DirectionEstimator::new(
        &res.model,
        &res.pose,
        scenario.sensing.k,
        scenario.sensing.los_samples,
        &res.geometry,
        sim.sample_rate_hz,
        (phi - span, phi + span, step),
        sim.refine,
    )?;
    let outcomes: Vec<Result<RunOutcome>> = map_indexed(sim.runs, mode, |run| {
        monte_carlo_run(run, w, &res.partition, &res.pose, &params, &res.geometry, &config, &estimator)
    });
    let rows = outcomes
        .into_iter()
        .map(|o| {
            o.map(|o| SimRow {
                run: o.run,
                estimate_rad: o.estimate,
                error_rad: o.error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mse = rows.iter().map(|r| r.error_rad * r.error_rad).sum::<f64>() / rows.len() as f64;
    let summary = SimSummary {
        runs: rows.len(),
        mse_rad2: mse,
        crb_rad2: crb,
        ratio: mse / crb,
        t_s_samples: sim.num_samples,
        grid_step_rad: step,
    };
    Ok((rows, summary))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
