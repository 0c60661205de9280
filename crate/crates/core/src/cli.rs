//! Command-line driver. Every subcommand is reduced to a flat `key=value`
//! [`RunConfig`]; that map is what runs, and it is echoed verbatim into the
//! manifest so `rerun` can reproduce any output from the manifest alone.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{build_g, build_lambda, BindingPotential, SystemParams};
use crate::phases::{self, FockLabel};
use crate::spectral::{self, classify, Classification};
use crate::sweep::{self, CurveTable, GridSpec, RegionMap};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Overrides the worker-thread count of the sweep pool.
pub const THREADS_ENV: &str = "PENNING_PHASES_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "penning-phases",
    version,
    about = "Confinement regions, normal modes and geometric phases in a Penning trap with a rotating field"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify one parameter point and print its spectrum.
    Classify(ClassifyArgs),
    /// Quasienergy and geometric phase of a Fock state.
    Phases(PhasesArgs),
    /// Region map over (alpha, alpha0) with w = 4 alpha0 / 3.
    Fig1(Fig1Args),
    /// Adiabatic derivative curves over k = B/B0.
    Fig2(Fig2Args),
    /// Critical field ratio of the static Penning loop.
    Kcr(KcrArgs),
    /// First-order resonance shift between two Fock states.
    Resonance(ResonanceArgs),
    /// Re-run a command from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; a `<out>.manifest` is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// One of three parameterizations: dimensionless (`alpha, alpha0, w`, with
/// `omega` as the unit), adiabatic (`k, omega` with `b0 = 1`, Penning loop),
/// or physical (`b, b0, w0, omega`).
#[derive(Debug, Clone, Default, Args)]
pub struct PointArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha0: Option<f64>,
    /// Defaults to 4·alpha0/3.
    #[arg(long, allow_negative_numbers = true)]
    pub w: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub w0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub omega: Option<f64>,
    /// penning, oscillator or diagonal:w1,w2,w3
    #[arg(long)]
    pub binding: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub point: PointArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PhasesArgs {
    #[command(flatten)]
    pub point: PointArgs,
    #[arg(long)]
    pub n1: Option<u32>,
    #[arg(long)]
    pub n2: Option<u32>,
    #[arg(long)]
    pub n3: Option<u32>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct Fig1Args {
    #[arg(long)]
    pub alpha_min: Option<f64>,
    #[arg(long)]
    pub alpha_max: Option<f64>,
    #[arg(long)]
    pub alpha_steps: Option<usize>,
    #[arg(long)]
    pub alpha0_min: Option<f64>,
    #[arg(long)]
    pub alpha0_max: Option<f64>,
    #[arg(long)]
    pub alpha0_steps: Option<usize>,
    /// Keep the window fixed even if fewer than four components are found.
    #[arg(long)]
    pub no_extend: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct Fig2Args {
    #[arg(long)]
    pub k_min: Option<f64>,
    #[arg(long)]
    pub k_max: Option<f64>,
    #[arg(long)]
    pub k_steps: Option<usize>,
    #[arg(long)]
    pub binding: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct KcrArgs {
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ResonanceArgs {
    #[command(flatten)]
    pub point: PointArgs,
    /// Fock label as n1,n2,n3
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub n_prime: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta_omega: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write to this path instead of the one recorded in the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const POINT_KEYS: &[&str] = &[
    "alpha", "alpha0", "w", "k", "b", "b0", "w0", "omega", "binding",
];
const OUTPUT_KEYS: &[&str] = &["out", "format"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Classify,
    Phases,
    Fig1,
    Fig2,
    Kcr,
    Resonance,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Classify => "classify",
            CommandKind::Phases => "phases",
            CommandKind::Fig1 => "fig1",
            CommandKind::Fig2 => "fig2",
            CommandKind::Kcr => "kcr",
            CommandKind::Resonance => "resonance",
        }
    }

    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "classify" => CommandKind::Classify,
            "phases" => CommandKind::Phases,
            "fig1" => CommandKind::Fig1,
            "fig2" => CommandKind::Fig2,
            "kcr" => CommandKind::Kcr,
            "resonance" => CommandKind::Resonance,
            other => return Err(Error::Config(format!("unknown command {other:?}"))),
        })
    }

    fn keys(self) -> Vec<&'static str> {
        let own: &[&str] = match self {
            CommandKind::Classify => POINT_KEYS,
            CommandKind::Phases => &["n1", "n2", "n3"],
            CommandKind::Fig1 => &[
                "alpha_min",
                "alpha_max",
                "alpha_steps",
                "alpha0_min",
                "alpha0_max",
                "alpha0_steps",
                "auto_extend",
            ],
            CommandKind::Fig2 => &["k_min", "k_max", "k_steps", "binding"],
            CommandKind::Kcr => &["tol"],
            CommandKind::Resonance => &["n", "n_prime", "delta_omega"],
        };
        let mut keys = own.to_vec();
        if matches!(self, CommandKind::Phases | CommandKind::Resonance) {
            keys.extend_from_slice(POINT_KEYS);
        }
        keys.extend_from_slice(OUTPUT_KEYS);
        keys
    }

    fn default_format(self) -> Format {
        match self {
            CommandKind::Fig1 | CommandKind::Fig2 => Format::Csv,
            _ => Format::Json,
        }
    }

    fn formats(self) -> &'static [Format] {
        match self {
            CommandKind::Fig1 | CommandKind::Fig2 => &[Format::Csv, Format::Json, Format::Svg],
            _ => &[Format::Json],
        }
    }
}

/// Fully resolved run: the command plus every parameter as text.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub values: BTreeMap<String, String>,
}

/// Parses `key=value` lines with `#` comments into an ordered map.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {}: expected key=value, got {raw:?}",
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl RunConfig {
    /// Merges a config file (if any) under the explicit flags, rejects
    /// unknown keys and fills in defaults.
    pub fn build(
        command: CommandKind,
        flags: Vec<(&'static str, Option<String>)>,
        config: Option<&Path>,
    ) -> Result<Self> {
        let mut values = match config {
            Some(path) => parse_key_values(&read_text(path)?)?,
            None => BTreeMap::new(),
        };
        for (key, value) in flags {
            if let Some(v) = value {
                values.insert(key.to_string(), v);
            }
        }
        let mut cfg = RunConfig { command, values };
        cfg.check_keys()?;
        cfg.fill_defaults();
        Ok(cfg)
    }

    fn check_keys(&self) -> Result<()> {
        let allowed = self.command.keys();
        for key in self.values.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown key {key:?} for {}; allowed: {}",
                    self.command.name(),
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn fill_defaults(&mut self) {
        let defaults: Vec<(&str, String)> = match self.command {
            CommandKind::Fig1 => vec![
                ("alpha_min", "0.0".into()),
                ("alpha_max", "3.0".into()),
                ("alpha_steps", "600".into()),
                ("alpha0_min", "0.0".into()),
                ("alpha0_max", "3.0".into()),
                ("alpha0_steps", "600".into()),
                ("auto_extend", "true".into()),
            ],
            CommandKind::Fig2 => {
                let g = sweep::default_k_grid();
                vec![
                    ("k_min", format!("{:?}", g.min)),
                    ("k_max", format!("{:?}", g.max)),
                    ("k_steps", g.steps.to_string()),
                    ("binding", "penning".into()),
                ]
            }
            CommandKind::Kcr => vec![("tol", "1e-7".into())],
            CommandKind::Phases => vec![("n1", "0".into()), ("n2", "0".into()), ("n3", "0".into())],
            CommandKind::Resonance => vec![("n_prime", "0,0,0".into())],
            CommandKind::Classify => vec![],
        };
        for (key, value) in defaults {
            self.values.entry(key.to_string()).or_insert(value);
        }
        if self.values.contains_key("alpha")
            || self.values.contains_key("k")
            || self.values.contains_key("b0")
        {
            self.values
                .entry("binding".into())
                .or_insert_with(|| "penning".into());
        }
        self.values
            .entry("format".into())
            .or_insert_with(|| self.command.default_format().name().into());
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| Error::Config(format!("{} needs {key}", self.command.name())))
    }

    pub fn out(&self) -> Option<PathBuf> {
        self.raw("out").map(PathBuf::from)
    }

    pub fn format(&self) -> Result<Format> {
        let raw = self.raw("format").unwrap_or("json");
        let format = Format::from_str(raw, true)
            .map_err(|_| Error::Config(format!("unknown format {raw:?}")))?;
        if !self.command.formats().contains(&format) {
            return Err(Error::Config(format!(
                "{} does not support format {raw}",
                self.command.name()
            )));
        }
        Ok(format)
    }

    /// Manifest text: version and tolerances as comments, then the command
    /// and every resolved key.
    pub fn manifest(&self) -> String {
        let mut text = String::new();
        let _ = writeln!(text, "# penning-phases {VERSION}");
        let _ = writeln!(
            text,
            "# tolerances: re_factor={:e} gap_factor={:e} residual={:e} tracking={:e} derivative_agreement={:e} phase_agreement={:e} fd_step={:e}",
            spectral::RE_TOLERANCE_FACTOR,
            spectral::GAP_TOLERANCE_FACTOR,
            spectral::RESIDUAL_TOLERANCE,
            spectral::TRACKING_AMBIGUITY,
            phases::DERIVATIVE_AGREEMENT,
            phases::PHASE_AGREEMENT,
            phases::FINITE_DIFF_STEP,
        );
        let _ = writeln!(text, "command={}", self.command.name());
        for (key, value) in &self.values {
            let _ = writeln!(text, "{key}={value}");
        }
        text
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut values = parse_key_values(text)?;
        let command = values
            .remove("command")
            .ok_or_else(|| Error::Config("manifest has no command".into()))?;
        let cfg = RunConfig {
            command: CommandKind::parse(&command)?,
            values,
        };
        cfg.check_keys()?;
        Ok(cfg)
    }
}

fn opt<T: std::fmt::Debug>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(|x| format!("{x:?}"))
}

fn point_flags(p: &PointArgs) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("alpha", opt(&p.alpha)),
        ("alpha0", opt(&p.alpha0)),
        ("w", opt(&p.w)),
        ("k", opt(&p.k)),
        ("b", opt(&p.b)),
        ("b0", opt(&p.b0)),
        ("w0", opt(&p.w0)),
        ("omega", opt(&p.omega)),
        ("binding", p.binding.clone()),
    ]
}

fn output_flags(o: &OutputArgs) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("out", o.out.as_ref().map(|p| p.display().to_string())),
        ("format", o.format.map(|f| f.name().to_string())),
    ]
}

/// Resolves a subcommand into its run configuration (`None` for `rerun`).
pub fn resolve(command: &Command) -> Result<Option<RunConfig>> {
    let (kind, mut flags, output) = match command {
        Command::Classify(a) => (CommandKind::Classify, point_flags(&a.point), &a.output),
        Command::Phases(a) => {
            let mut f = point_flags(&a.point);
            f.extend([("n1", opt(&a.n1)), ("n2", opt(&a.n2)), ("n3", opt(&a.n3))]);
            (CommandKind::Phases, f, &a.output)
        }
        Command::Fig1(a) => (
            CommandKind::Fig1,
            vec![
                ("alpha_min", opt(&a.alpha_min)),
                ("alpha_max", opt(&a.alpha_max)),
                ("alpha_steps", opt(&a.alpha_steps)),
                ("alpha0_min", opt(&a.alpha0_min)),
                ("alpha0_max", opt(&a.alpha0_max)),
                ("alpha0_steps", opt(&a.alpha0_steps)),
                ("auto_extend", a.no_extend.then(|| "false".to_string())),
            ],
            &a.output,
        ),
        Command::Fig2(a) => (
            CommandKind::Fig2,
            vec![
                ("k_min", opt(&a.k_min)),
                ("k_max", opt(&a.k_max)),
                ("k_steps", opt(&a.k_steps)),
                ("binding", a.binding.clone()),
            ],
            &a.output,
        ),
        Command::Kcr(a) => (CommandKind::Kcr, vec![("tol", opt(&a.tol))], &a.output),
        Command::Resonance(a) => {
            let mut f = point_flags(&a.point);
            f.extend([
                ("n", a.n.clone()),
                ("n_prime", a.n_prime.clone()),
                ("delta_omega", opt(&a.delta_omega)),
            ]);
            (CommandKind::Resonance, f, &a.output)
        }
        Command::Rerun(_) => return Ok(None),
    };
    flags.extend(output_flags(output));
    RunConfig::build(kind, flags, output.config.as_deref()).map(Some)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Style {
    Dimensionless,
    Adiabatic,
    Physical,
}

fn resolve_point(cfg: &RunConfig) -> Result<(SystemParams, BindingPotential, Style)> {
    let has = |keys: &[&str]| keys.iter().any(|k| cfg.values.contains_key(*k));
    let styles = [
        (has(&["alpha", "alpha0", "w"]), Style::Dimensionless),
        (has(&["k"]), Style::Adiabatic),
        (has(&["b", "b0", "w0"]), Style::Physical),
    ];
    let chosen: Vec<Style> = styles.iter().filter(|s| s.0).map(|s| s.1).collect();
    let style =
        match chosen.as_slice() {
            [one] => *one,
            [] => return Err(Error::Domain(
                "give a point as --alpha/--alpha0[/--w], --k[/--omega] or --b/--b0/--w0[/--omega]"
                    .into(),
            )),
            _ => {
                return Err(Error::Domain(
                    "mixed parameterization styles; use exactly one".into(),
                ))
            }
        };
    let binding: BindingPotential = cfg.raw("binding").unwrap_or("penning").parse()?;
    let f = |key: &str| cfg.parsed::<f64>(key);
    let need = |key: &str| -> Result<f64> {
        f(key)?.ok_or_else(|| Error::Domain(format!("missing --{key}")))
    };
    let params = match style {
        Style::Dimensionless => {
            if cfg.values.contains_key("omega") {
                return Err(Error::Domain(
                    "omega is the unit in the dimensionless style; drop --omega".into(),
                ));
            }
            let alpha0 = need("alpha0")?;
            let w = f("w")?.unwrap_or(crate::model::PENNING_LOOP_RATIO * alpha0);
            SystemParams::from_dimensionless(need("alpha")?, alpha0, w)?
        }
        Style::Adiabatic => SystemParams::adiabatic(need("k")?, f("omega")?.unwrap_or(0.0))?,
        Style::Physical => SystemParams::new(
            f("b")?.unwrap_or(0.0),
            need("b0")?,
            need("w0")?,
            f("omega")?.unwrap_or(0.0),
        )?,
    };
    Ok((params, binding, style))
}

fn parse_label(text: &str) -> Result<FockLabel> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(Error::Domain(format!(
            "Fock label must be n1,n2,n3, got {text:?}"
        )));
    };
    let p = |s: &str| {
        s.parse::<u32>().map_err(|_| {
            Error::Domain(format!(
                "Fock label entries must be non-negative integers, got {s:?}"
            ))
        })
    };
    Ok(FockLabel::new(p(a)?, p(b)?, p(c)?))
}

#[derive(Debug, Serialize)]
struct ModeReport {
    freq: f64,
    krein_sign: i8,
}

#[derive(Debug, Serialize)]
struct ClassifyReport {
    classification: Classification,
    b: f64,
    b0: f64,
    w0: f64,
    omega: f64,
    binding: String,
    /// `[re, im]` pairs by descending imaginary part.
    eigenvalues: Vec<[f64; 2]>,
    modes: Vec<ModeReport>,
    max_real_part: f64,
    tolerance_re: f64,
    tolerance_gap: f64,
}

#[derive(Debug, Serialize)]
struct Fig1Summary {
    alpha: GridSpec,
    alpha0: GridSpec,
    extensions: usize,
    confined_components: usize,
    unconfined_regions: usize,
    confined_cells: usize,
    unconfined_cells: usize,
    boundary_cells: usize,
}

/// Output of one run: file contents and a one-line summary.
pub struct Rendered {
    pub bytes: Vec<u8>,
    pub summary: String,
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Numerical(format!("csv: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(&row).map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Numerical(format!("csv: {e}")))
}

pub fn fig1_csv(map: &RegionMap) -> Result<Vec<u8>> {
    csv_bytes(
        &["alpha", "alpha0", "class", "component"],
        map.rows()
            .map(|(a, b, c, id)| vec![real(a), real(b), c.code().to_string(), id.to_string()]),
    )
}

pub fn fig2_csv(table: &CurveTable) -> Result<Vec<u8>> {
    let cell = |v: Option<f64>| v.map(real).unwrap_or_default();
    csv_bytes(
        &["k", "cos_theta", "dw1", "dw2", "dw3", "stable23"],
        table.rows.iter().map(|r| {
            vec![
                real(r.k),
                real(r.cos_theta),
                cell(r.dw[0]),
                cell(r.dw[1]),
                cell(r.dw[2]),
                u8::from(r.stable23()).to_string(),
            ]
        }),
    )
}

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#ff9da7",
];
const PLOT: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn svg_frame(svg: &mut String, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) {
    let size = PLOT + 2.0 * MARGIN;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{PLOT}" height="{PLOT}" fill="none" stroke="black"/>"#
    );
    let bottom = MARGIN + PLOT;
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}" text-anchor="middle">{}</text>"#,
        bottom + 16.0,
        fmt_tick(x.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        bottom,
        bottom + 16.0,
        fmt_tick(x.1)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{bottom}" text-anchor="end">{}</text>"#,
        MARGIN - 4.0,
        fmt_tick(y.0)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        MARGIN - 4.0,
        MARGIN + 4.0,
        fmt_tick(y.1)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        MARGIN + PLOT / 2.0,
        bottom + 36.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{y_label}</text>"#,
        MARGIN + PLOT / 2.0
    );
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn fig1_svg(map: &RegionMap) -> String {
    let mut svg = String::new();
    svg_frame(
        &mut svg,
        "α",
        "α₀",
        (map.alpha.min, map.alpha.max),
        (map.alpha0.min, map.alpha0.max),
    );
    let (na, nb) = (map.alpha.steps, map.alpha0.steps);
    let (cw, ch) = (PLOT / na as f64, PLOT / nb as f64);
    let _ = writeln!(svg, r#"<g shape-rendering="crispEdges">"#);
    for j in 0..nb {
        let y = MARGIN + PLOT - (j + 1) as f64 * ch;
        let mut i = 0;
        while i < na {
            let key = (map.class_at(i, j), map.component_at(i, j));
            let start = i;
            while i < na && (map.class_at(i, j), map.component_at(i, j)) == key {
                i += 1;
            }
            let fill = match key {
                (Classification::Confined, id) => PALETTE[id as usize % PALETTE.len()],
                (Classification::Unconfined, _) => "#e0e0e0",
                (Classification::Boundary, _) => "#000000",
            };
            let _ = writeln!(
                svg,
                r#"<rect x="{:.3}" y="{y:.3}" width="{:.3}" height="{ch:.3}" fill="{fill}"/>"#,
                MARGIN + start as f64 * cw,
                (i - start) as f64 * cw
            );
        }
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}

pub fn fig2_svg(table: &CurveTable) -> String {
    let ks: Vec<f64> = table.rows.iter().map(|r| r.k).collect();
    let values = table
        .rows
        .iter()
        .flat_map(|r| r.dw.iter().flatten().copied());
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    let pad = 0.05 * (hi - lo).max(1e-12);
    let (lo, hi) = (lo - pad, hi + pad);
    let (k0, k1) = (
        ks.first().copied().unwrap_or(0.0),
        ks.last().copied().unwrap_or(1.0),
    );
    let mut svg = String::new();
    svg_frame(&mut svg, "k = B/B₀", "∂ωᵢ/∂ω at ω = 0", (k0, k1), (lo, hi));
    let sx = |k: f64| MARGIN + PLOT * if k1 > k0 { (k - k0) / (k1 - k0) } else { 0.5 };
    let sy = |v: f64| MARGIN + PLOT * (1.0 - (v - lo) / (hi - lo));
    for col in 0..3 {
        let mut segment: Vec<String> = Vec::new();
        let mut flush = |segment: &mut Vec<String>| {
            if segment.len() > 1 {
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                    PALETTE[col],
                    segment.join(" ")
                );
            }
            segment.clear();
        };
        for r in &table.rows {
            match r.dw[col] {
                Some(v) => segment.push(format!("{:.3},{:.3}", sx(r.k), sy(v))),
                None => flush(&mut segment),
            }
        }
        flush(&mut segment);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{}">dw{}</text>"#,
            MARGIN + PLOT + 6.0,
            MARGIN + 14.0 * (col + 1) as f64,
            PALETTE[col],
            col + 1
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn grid(cfg: &RunConfig, prefix: &str) -> Result<GridSpec> {
    GridSpec::new(
        cfg.required(&format!("{prefix}_min"))?,
        cfg.required(&format!("{prefix}_max"))?,
        cfg.required(&format!("{prefix}_steps"))?,
    )
}

/// Runs a resolved configuration and renders its output in memory.
pub fn execute(cfg: &RunConfig) -> Result<Rendered> {
    let format = cfg.format()?;
    match cfg.command {
        CommandKind::Classify => {
            let (params, binding, _) = resolve_point(cfg)?;
            let dm = build_lambda(&build_g(&params, &binding));
            let spectrum = classify(&dm)?;
            let report = ClassifyReport {
                classification: spectrum.classification,
                b: params.b(),
                b0: params.b0(),
                w0: params.w0(),
                omega: params.omega(),
                binding: binding.to_string(),
                eigenvalues: spectrum
                    .raw_eigenvalues
                    .iter()
                    .map(|l| [l.re, l.im])
                    .collect(),
                modes: spectrum
                    .modes
                    .iter()
                    .map(|m| ModeReport {
                        freq: m.freq,
                        krein_sign: m.krein_sign.value() as i8,
                    })
                    .collect(),
                max_real_part: spectrum.max_real_part(),
                tolerance_re: spectrum.tolerances.re,
                tolerance_gap: spectrum.tolerances.gap,
            };
            Ok(Rendered {
                bytes: json(&report)?,
                summary: format!("{:?}", spectrum.classification),
            })
        }
        CommandKind::Phases => {
            let (params, binding, style) = resolve_point(cfg)?;
            let n = FockLabel::new(
                cfg.required("n1")?,
                cfg.required("n2")?,
                cfg.required("n3")?,
            );
            let report = if params.omega() > 0.0 {
                phases::aa_phase(&params, &binding, &n)?
            } else if style == Style::Adiabatic {
                phases::berry_phase_adiabatic(params.b(), &binding, &n)?
            } else {
                phases::berry_phase_static(&params, &binding, &n)?
            };
            Ok(Rendered {
                summary: format!("phase {:.12}", report.aa_phase_freq),
                bytes: json(&report)?,
            })
        }
        CommandKind::Fig1 => {
            let (a, b) = (grid(cfg, "alpha")?, grid(cfg, "alpha0")?);
            let auto: bool = cfg.required("auto_extend")?;
            let map = if auto {
                sweep::sweep_fig1_auto(a, b)
            } else {
                sweep::sweep_fig1(a, b)
            };
            let summary = format!(
                "{} confined components, {} unconfined regions",
                map.component_count, map.unconfined_regions
            );
            let bytes = match format {
                Format::Csv => fig1_csv(&map)?,
                Format::Svg => fig1_svg(&map).into_bytes(),
                Format::Json => json(&Fig1Summary {
                    alpha: map.alpha,
                    alpha0: map.alpha0,
                    extensions: map.extensions,
                    confined_components: map.component_count,
                    unconfined_regions: map.unconfined_regions,
                    confined_cells: map.count(Classification::Confined),
                    unconfined_cells: map.count(Classification::Unconfined),
                    boundary_cells: map.count(Classification::Boundary),
                })?,
            };
            Ok(Rendered { bytes, summary })
        }
        CommandKind::Fig2 => {
            let binding: BindingPotential = cfg.raw("binding").unwrap_or("penning").parse()?;
            let ks = grid(cfg, "k")?.values();
            let table = sweep::curve_fig2(&ks, &binding)?;
            let summary = format!("{} rows", table.rows.len());
            let bytes = match format {
                Format::Csv => fig2_csv(&table)?,
                Format::Svg => fig2_svg(&table).into_bytes(),
                Format::Json => json(&table)?,
            };
            Ok(Rendered { bytes, summary })
        }
        CommandKind::Kcr => {
            let result = sweep::find_kcr(cfg.required("tol")?)?;
            Ok(Rendered {
                summary: format!("k_cr = {}", result.k_cr),
                bytes: json(&result)?,
            })
        }
        CommandKind::Resonance => {
            let (params, binding, _) = resolve_point(cfg)?;
            let n = parse_label(
                cfg.raw("n")
                    .ok_or_else(|| Error::Config("resonance needs n".into()))?,
            )?;
            let n_prime = parse_label(cfg.raw("n_prime").unwrap_or("0,0,0"))?;
            let shift = phases::resonance_shift(
                &params,
                &binding,
                &n,
                &n_prime,
                cfg.required("delta_omega")?,
            )?;
            Ok(Rendered {
                summary: format!("predicted {} exact {}", shift.predicted, shift.exact),
                bytes: json(&shift)?,
            })
        }
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest");
    PathBuf::from(name)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Executes and writes outputs. With an output path the result and its
/// manifest go to files; otherwise the result goes to stdout and the
/// manifest to stderr.
pub fn run_config(cfg: &RunConfig) -> Result<()> {
    let rendered = execute(cfg)?;
    match cfg.out() {
        Some(path) => {
            write_file(&path, &rendered.bytes)?;
            write_file(&manifest_path(&path), cfg.manifest().as_bytes())?;
            println!(
                "{}: {} -> {}",
                cfg.command.name(),
                rendered.summary,
                path.display()
            );
        }
        None => {
            std::io::stdout()
                .write_all(&rendered.bytes)
                .map_err(|e| Error::io("<stdout>", e))?;
            eprint!("{}", cfg.manifest());
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.command {
        Command::Rerun(args) => {
            let mut cfg = RunConfig::from_manifest(&read_text(&args.manifest)?)?;
            if let Some(out) = &args.out {
                cfg.values.insert("out".into(), out.display().to_string());
            }
            cfg
        }
        other => resolve(other)?.expect("non-rerun commands resolve to a config"),
    };
    run_config(&cfg)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Error::Config(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
