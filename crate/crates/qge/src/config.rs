//! Run configuration for the batch front-end.
//!
//! Configs are plain line-oriented `key = value` text: blank lines and lines
//! starting with `#` are skipped, every other line must set exactly one known
//! key, and parse errors always cite the offending line number. The same
//! syntax is emitted back out as the run manifest, so a manifest is itself a
//! valid config that reproduces the run.
//!
//! Numeric values accept plain floats plus the two spellings that show up
//! constantly in convergence work: fractions like `1/8192` and `pi`-based
//! forms like `pi/2`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::QgeError;
use crate::params::PhysicalParameters;
use crate::stepper::LinearSolverKind;

/// What the run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// One simulation on one mesh, emitting per-step diagnostics.
    SingleRun,
    /// Spatial convergence study against the smooth vortex benchmark on the
    /// unit square.
    StudyTest1,
    /// Spatial convergence study against the western boundary layer benchmark
    /// on the 3 x 1 basin.
    StudyTest2,
    /// Convergence study against a manufactured discrete trajectory built
    /// from seeded random data; every row should sit at the iteration noise
    /// floor.
    CustomMms,
}

impl RunMode {
    pub fn parse(s: &str) -> Option<RunMode> {
        match s {
            "single-run" => Some(RunMode::SingleRun),
            "study-test1" => Some(RunMode::StudyTest1),
            "study-test2" => Some(RunMode::StudyTest2),
            "custom-mms" => Some(RunMode::CustomMms),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RunMode::SingleRun => "single-run",
            RunMode::StudyTest1 => "study-test1",
            RunMode::StudyTest2 => "study-test2",
            RunMode::CustomMms => "custom-mms",
        }
    }

    fn is_study(self) -> bool {
        !matches!(self, RunMode::SingleRun)
    }
}

/// Initial state of a single run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// Fluid at rest.
    Zero,
    /// A smooth vortex profile, useful for unforced spin-down runs.
    Vortex,
}

impl InitialState {
    fn parse(s: &str) -> Option<InitialState> {
        match s {
            "zero" => Some(InitialState::Zero),
            "vortex" => Some(InitialState::Vortex),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            InitialState::Zero => "zero",
            InitialState::Vortex => "vortex",
        }
    }
}

fn solver_name(kind: LinearSolverKind) -> &'static str {
    match kind {
        LinearSolverKind::FrozenGmres => "frozen-gmres",
        LinearSolverKind::Direct => "direct",
    }
}

fn parse_solver(s: &str) -> Option<LinearSolverKind> {
    match s {
        "frozen-gmres" => Some(LinearSolverKind::FrozenGmres),
        "direct" => Some(LinearSolverKind::Direct),
        _ => None,
    }
}

/// Fully resolved run parameters, defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: RunMode,
    pub reynolds: f64,
    pub rossby: f64,
    /// Mesh sizes of the study ladder, in the order rows should appear.
    pub h_list: Vec<f64>,
    /// Cell counts of a single run's mesh.
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub solver: LinearSolverKind,
    pub workers: usize,
    pub width: f64,
    pub height: f64,
    pub initial: InitialState,
    /// Seed for the random trajectory of a custom manufactured study.
    pub seed: u64,
    /// Time-linear trajectory amplitude: the exact coefficients evolve as
    /// alpha + beta * t.
    pub alpha: f64,
    pub beta: f64,
    pub emit_plot: bool,
    pub out_dir: PathBuf,
}

/// One key=value line of a config file.
#[derive(Debug, Clone)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

fn parse_error(line: usize, message: impl Into<String>) -> QgeError {
    QgeError::ConfigParse { line, message: message.into() }
}

/// Split config text into key=value entries, skipping blanks and comments.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>, QgeError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(parse_error(line, format!("expected key=value, got {:?}", trimmed)));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(parse_error(line, "missing key before '='"));
        }
        if value.is_empty() {
            return Err(parse_error(line, format!("key {} has an empty value", key)));
        }
        entries.push(Entry { line, key: key.to_string(), value: value.to_string() });
    }
    Ok(entries)
}

/// Parse a numeric value: a float, `pi`, or a fraction of the two.
pub fn parse_number(s: &str) -> Option<f64> {
    fn term(t: &str) -> Option<f64> {
        let t = t.trim();
        if t == "pi" {
            Some(PI)
        } else {
            t.parse::<f64>().ok().filter(|v| v.is_finite())
        }
    }
    match s.split_once('/') {
        Some((num, den)) => {
            let den = term(den)?;
            if den == 0.0 {
                return None;
            }
            Some(term(num)? / den)
        }
        None => term(s),
    }
}

/// Every key the config format knows, with the modes it applies to.
const KNOWN_KEYS: &[(&str, &[RunMode])] = {
    use RunMode::*;
    &[
        ("mode", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("Re", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("Ro", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("k", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("T", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("newton_tol", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("newton_max_iters", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("solver", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("workers", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("out", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("h", &[StudyTest1, StudyTest2, CustomMms]),
        ("emit_plot", &[StudyTest1, StudyTest2, CustomMms]),
        ("nx", &[SingleRun]),
        ("ny", &[SingleRun]),
        ("width", &[SingleRun, CustomMms]),
        ("height", &[SingleRun, CustomMms]),
        ("initial", &[SingleRun]),
        ("seed", &[CustomMms]),
        ("alpha", &[CustomMms]),
        ("beta", &[CustomMms]),
        ("physical.wind_stress", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("physical.density", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("physical.depth", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("physical.beta", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("physical.basin_width", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("physical.eddy_viscosity", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
        ("physical.coriolis_f0", &[SingleRun, StudyTest1, StudyTest2, CustomMms]),
    ]
};

const PHYSICAL_KEYS: [&str; 7] = [
    "physical.wind_stress",
    "physical.density",
    "physical.depth",
    "physical.beta",
    "physical.basin_width",
    "physical.eddy_viscosity",
    "physical.coriolis_f0",
];

impl RunConfig {
    /// Defaults for a mode, before any file keys are applied.
    fn defaults(mode: RunMode) -> RunConfig {
        let mut cfg = RunConfig {
            mode,
            reynolds: 1.0,
            rossby: 1.0,
            h_list: vec![0.5, 0.25, 0.125, 0.0625],
            nx: 8,
            ny: 8,
            dt: 1.0 / 64.0,
            t_final: 1.0,
            newton_tol: 1e-8,
            newton_max_iters: 25,
            solver: LinearSolverKind::FrozenGmres,
            workers: 1,
            width: 1.0,
            height: 1.0,
            initial: InitialState::Zero,
            seed: 42,
            alpha: 0.4,
            beta: 0.8,
            emit_plot: false,
            out_dir: PathBuf::from("."),
        };
        match mode {
            RunMode::SingleRun => {}
            RunMode::StudyTest1 => {
                cfg.dt = 1.0 / 8192.0;
                cfg.t_final = PI / 2.0;
            }
            RunMode::StudyTest2 => {
                cfg.dt = 1.0 / 8192.0;
                cfg.t_final = 0.5;
                cfg.width = 3.0;
            }
            RunMode::CustomMms => {
                cfg.dt = 0.1;
                cfg.t_final = 0.5;
                cfg.h_list = vec![0.5, 0.25, 0.125];
            }
        }
        cfg
    }

    /// Resolve entries into a full configuration.
    ///
    /// `mode_override` and `out_override` implement the command-line flags,
    /// which win over the corresponding file keys.
    pub fn from_entries(
        entries: &[Entry],
        mode_override: Option<RunMode>,
        out_override: Option<PathBuf>,
    ) -> Result<RunConfig, QgeError> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for entry in entries {
            if let Some(first) = seen.insert(entry.key.as_str(), entry.line) {
                return Err(parse_error(
                    entry.line,
                    format!("duplicate key {} (already set on line {})", entry.key, first),
                ));
            }
        }

        let mode = match mode_override {
            Some(mode) => mode,
            None => {
                let entry = entries.iter().find(|e| e.key == "mode").ok_or_else(|| {
                    QgeError::InvalidConfig(
                        "mode is required: set mode= in the config or pass --mode".into(),
                    )
                })?;
                RunMode::parse(&entry.value).ok_or_else(|| {
                    parse_error(entry.line, format!("unknown mode {:?}", entry.value))
                })?
            }
        };

        let mut cfg = RunConfig::defaults(mode);
        let mut physical: HashMap<&str, (usize, f64)> = HashMap::new();
        let mut direct_re_line = None;
        let mut direct_ro_line = None;

        for entry in entries {
            let line = entry.line;
            let key = entry.key.as_str();
            let value = entry.value.as_str();
            let Some((_, modes)) = KNOWN_KEYS.iter().find(|(k, _)| *k == key) else {
                return Err(parse_error(line, format!("unknown key {}", key)));
            };
            if !modes.contains(&mode) {
                return Err(parse_error(
                    line,
                    format!("key {} does not apply to mode {}", key, mode.name()),
                ));
            }

            let bad = |what: &str| parse_error(line, format!("invalid {} {:?}", what, value));
            let number = |what: &str| parse_number(value).ok_or_else(|| bad(what));
            let positive = |what: &str| {
                number(what).and_then(|v| {
                    if v > 0.0 {
                        Ok(v)
                    } else {
                        Err(parse_error(line, format!("{} must be positive, got {}", what, v)))
                    }
                })
            };
            match key {
                "mode" => {
                    if RunMode::parse(value).is_none() {
                        return Err(parse_error(line, format!("unknown mode {:?}", value)));
                    }
                }
                "Re" => {
                    cfg.reynolds = positive("Reynolds number")?;
                    direct_re_line = Some(line);
                }
                "Ro" => {
                    cfg.rossby = positive("Rossby number")?;
                    direct_ro_line = Some(line);
                }
                "k" => cfg.dt = positive("time step")?,
                "T" => cfg.t_final = positive("final time")?,
                "newton_tol" => cfg.newton_tol = positive("Newton tolerance")?,
                "newton_max_iters" => {
                    cfg.newton_max_iters = value
                        .parse::<usize>()
                        .ok()
                        .filter(|&n| n >= 1)
                        .ok_or_else(|| bad("iteration count"))?;
                }
                "solver" => cfg.solver = parse_solver(value).ok_or_else(|| bad("solver"))?,
                "workers" => {
                    cfg.workers = value
                        .parse::<usize>()
                        .ok()
                        .filter(|&n| n >= 1)
                        .ok_or_else(|| bad("worker count"))?;
                }
                "out" => cfg.out_dir = PathBuf::from(value),
                "h" => {
                    let mut list = Vec::new();
                    for part in value.split(',') {
                        let h = parse_number(part)
                            .filter(|&h| h > 0.0)
                            .ok_or_else(|| bad("mesh size list"))?;
                        list.push(h);
                    }
                    cfg.h_list = list;
                }
                "emit_plot" => {
                    cfg.emit_plot = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad("flag (expected true or false)")),
                    };
                }
                "nx" => {
                    cfg.nx = value
                        .parse::<usize>()
                        .ok()
                        .filter(|&n| n >= 1)
                        .ok_or_else(|| bad("cell count"))?;
                }
                "ny" => {
                    cfg.ny = value
                        .parse::<usize>()
                        .ok()
                        .filter(|&n| n >= 1)
                        .ok_or_else(|| bad("cell count"))?;
                }
                "width" => cfg.width = positive("domain width")?,
                "height" => cfg.height = positive("domain height")?,
                "initial" => {
                    cfg.initial = InitialState::parse(value).ok_or_else(|| bad("initial state"))?;
                }
                "seed" => cfg.seed = value.parse::<u64>().map_err(|_| bad("seed"))?,
                "alpha" => cfg.alpha = number("coefficient")?,
                "beta" => cfg.beta = number("coefficient")?,
                _ if key.starts_with("physical.") => {
                    physical.insert(
                        KNOWN_KEYS.iter().find(|(k, _)| *k == key).map(|(k, _)| *k).unwrap(),
                        (line, number("physical parameter")?),
                    );
                }
                _ => unreachable!("key {} passed the known-key check", key),
            }
        }

        if !physical.is_empty() {
            if let Some(line) = direct_re_line.or(direct_ro_line) {
                return Err(parse_error(
                    line,
                    "Re/Ro conflict with the physical block; give one or the other".to_string(),
                ));
            }
            for key in PHYSICAL_KEYS {
                if !physical.contains_key(key) {
                    return Err(QgeError::InvalidConfig(format!(
                        "incomplete physical block: missing {}",
                        key
                    )));
                }
            }
            let value = |key: &str| physical[key].1;
            let params = PhysicalParameters {
                wind_stress: value("physical.wind_stress"),
                density: value("physical.density"),
                depth: value("physical.depth"),
                beta: value("physical.beta"),
                basin_width: value("physical.basin_width"),
                eddy_viscosity: value("physical.eddy_viscosity"),
                coriolis_f0: value("physical.coriolis_f0"),
            };
            let nd = params.nondimensionalize()?;
            cfg.reynolds = nd.reynolds;
            cfg.rossby = nd.rossby;
        }

        if let Some(out) = out_override {
            cfg.out_dir = out;
        }
        if cfg.mode.is_study() && cfg.h_list.is_empty() {
            return Err(QgeError::InvalidConfig("study needs at least one mesh size".into()));
        }
        Ok(cfg)
    }

    /// Parse a config file's text directly.
    pub fn from_text(
        text: &str,
        mode_override: Option<RunMode>,
        out_override: Option<PathBuf>,
    ) -> Result<RunConfig, QgeError> {
        let entries = parse_entries(text)?;
        RunConfig::from_entries(&entries, mode_override, out_override)
    }

    /// Render the manifest: a comment header plus every result-influencing
    /// parameter, in the same key=value syntax the parser reads. Floats print
    /// in shortest round-trip form, so feeding a manifest back in reproduces
    /// the run bit for bit.
    pub fn manifest(&self, version: &str, wall_seconds: f64) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# qge run manifest");
        let _ = writeln!(out, "# version: {}", version);
        let _ = writeln!(out, "# wall_clock_seconds: {:.3}", wall_seconds);
        let _ = writeln!(out, "mode = {}", self.mode.name());
        let _ = writeln!(out, "Re = {}", self.reynolds);
        let _ = writeln!(out, "Ro = {}", self.rossby);
        match self.mode {
            RunMode::SingleRun => {
                let _ = writeln!(out, "nx = {}", self.nx);
                let _ = writeln!(out, "ny = {}", self.ny);
                let _ = writeln!(out, "width = {}", self.width);
                let _ = writeln!(out, "height = {}", self.height);
                let _ = writeln!(out, "initial = {}", self.initial.name());
            }
            RunMode::StudyTest1 | RunMode::StudyTest2 => {
                let _ = writeln!(out, "h = {}", join_numbers(&self.h_list));
            }
            RunMode::CustomMms => {
                let _ = writeln!(out, "h = {}", join_numbers(&self.h_list));
                let _ = writeln!(out, "width = {}", self.width);
                let _ = writeln!(out, "height = {}", self.height);
                let _ = writeln!(out, "alpha = {}", self.alpha);
                let _ = writeln!(out, "beta = {}", self.beta);
                let _ = writeln!(out, "seed = {}", self.seed);
            }
        }
        let _ = writeln!(out, "k = {}", self.dt);
        let _ = writeln!(out, "T = {}", self.t_final);
        let _ = writeln!(out, "newton_tol = {}", self.newton_tol);
        let _ = writeln!(out, "newton_max_iters = {}", self.newton_max_iters);
        let _ = writeln!(out, "solver = {}", solver_name(self.solver));
        let _ = writeln!(out, "workers = {}", self.workers);
        if self.mode.is_study() {
            let _ = writeln!(out, "emit_plot = {}", self.emit_plot);
        }
        out
    }
}

fn join_numbers(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_study_config_gets_benchmark_defaults() {
        let cfg = RunConfig::from_text("mode = study-test1\n", None, None).unwrap();
        assert_eq!(cfg.mode, RunMode::StudyTest1);
        assert_eq!(cfg.reynolds, 1.0);
        assert_eq!(cfg.rossby, 1.0);
        assert_eq!(cfg.h_list, vec![0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(cfg.dt, 1.0 / 8192.0);
        assert_eq!(cfg.t_final, PI / 2.0);
        assert_eq!(cfg.newton_tol, 1e-8);
        assert_eq!(cfg.newton_max_iters, 25);
        assert_eq!(cfg.workers, 1);
        assert!(!cfg.emit_plot);

        let cfg2 = RunConfig::from_text("mode = study-test2\n", None, None).unwrap();
        assert_eq!(cfg2.width, 3.0);
        assert_eq!(cfg2.height, 1.0);
        assert_eq!(cfg2.t_final, 0.5);
    }

    #[test]
    fn values_accept_fractions_and_pi_forms() {
        let text = "mode = study-test1\nk = 1/8192\nT = pi/2\nh = 1/2, 1/4\n";
        let cfg = RunConfig::from_text(text, None, None).unwrap();
        assert_eq!(cfg.dt, 1.0 / 8192.0);
        assert_eq!(cfg.t_final, PI / 2.0);
        assert_eq!(cfg.h_list, vec![0.5, 0.25]);
        assert_eq!(parse_number("pi"), Some(PI));
        assert_eq!(parse_number("3.5e-2"), Some(0.035));
        assert_eq!(parse_number("1/0"), None);
        assert_eq!(parse_number("abc"), None);
    }

    #[test]
    fn malformed_numeric_value_names_its_line() {
        let text = "mode = study-test1\n# comment\nRe=abc\n";
        let err = RunConfig::from_text(text, None, None).unwrap_err().to_string();
        assert!(err.contains("line 3"), "error should cite line 3: {}", err);
        assert!(err.contains("abc"), "error should echo the value: {}", err);
    }

    #[test]
    fn unknown_and_misplaced_keys_are_rejected() {
        let err = RunConfig::from_text("mode = study-test1\nfrobnicate = 2\n", None, None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2") && err.contains("frobnicate"), "{}", err);

        let err = RunConfig::from_text("mode = study-test1\nnx = 4\n", None, None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("does not apply"), "{}", err);

        let err = RunConfig::from_text("mode = study-test1\nk = 0.1\nk = 0.2\n", None, None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("duplicate") && err.contains("line 2"), "{}", err);

        let err =
            RunConfig::from_text("mode = study-test1\njust words\n", None, None).unwrap_err();
        assert!(err.to_string().contains("key=value"), "{}", err);
    }

    #[test]
    fn physical_block_resolves_to_reduced_numbers() {
        let text = "mode = single-run\n\
                    physical.wind_stress = 0.1\n\
                    physical.density = 1000\n\
                    physical.depth = 500\n\
                    physical.beta = 2e-11\n\
                    physical.basin_width = 1e6\n\
                    physical.eddy_viscosity = 100\n\
                    physical.coriolis_f0 = 1e-4\n";
        let cfg = RunConfig::from_text(text, None, None).unwrap();
        assert!((cfg.reynolds - 100.0).abs() < 1e-9);
        assert!((cfg.rossby - 5.0e-4).abs() < 1e-15);

        let conflicted = format!("{}Re = 7\n", text);
        let err = RunConfig::from_text(&conflicted, None, None).unwrap_err().to_string();
        assert!(err.contains("physical block"), "{}", err);

        let partial = "mode = single-run\nphysical.density = 1000\n";
        let err = RunConfig::from_text(partial, None, None).unwrap_err().to_string();
        assert!(err.contains("missing physical.wind_stress"), "{}", err);
    }

    #[test]
    fn flag_overrides_beat_file_keys() {
        let text = "mode = study-test1\nout = somewhere\n";
        let cfg = RunConfig::from_text(
            text,
            Some(RunMode::StudyTest2),
            Some(PathBuf::from("elsewhere")),
        )
        .unwrap();
        assert_eq!(cfg.mode, RunMode::StudyTest2);
        assert_eq!(cfg.width, 3.0);
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));

        let missing_mode = RunConfig::from_text("k = 0.1\n", None, None).unwrap_err();
        assert!(missing_mode.to_string().contains("mode is required"), "{}", missing_mode);
        assert!(RunConfig::from_text("k = 0.1\n", Some(RunMode::SingleRun), None).is_ok());
    }

    #[test]
    fn manifest_round_trips_every_influencing_field() {
        for text in [
            "mode = study-test2\nRe = 2.5\nRo = 0.7\nh = 1/2,1/4\nk = 1/32\nT = 1/4\nworkers = 3\nemit_plot = true\n",
            "mode = single-run\nnx = 6\nny = 5\nwidth = 1.5\nheight = 1.25\ninitial = vortex\nk = 1/16\nT = pi/4\nsolver = direct\n",
            "mode = custom-mms\nh = 1/2,1/4\nalpha = -0.3\nbeta = 1.25\nseed = 9001\nnewton_tol = 1e-10\n",
        ] {
            let cfg = RunConfig::from_text(text, None, None).unwrap();
            let manifest = cfg.manifest("0.1.0-test", 12.345);
            let reparsed = RunConfig::from_text(&manifest, None, None)
                .unwrap_or_else(|e| panic!("manifest must reparse: {e}\n{manifest}"));
            assert_eq!(reparsed, cfg, "manifest drifted:\n{}", manifest);
            assert!(manifest.starts_with("# qge run manifest\n"));
            assert!(manifest.contains("# version: 0.1.0-test\n"));
            assert!(manifest.contains("# wall_clock_seconds: 12.345\n"));
        }
    }
}
