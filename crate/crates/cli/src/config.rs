//! Run configuration: command-line flags merged over an optional
//! `key = value` file, then over built-in defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use stokes_darcy::refelem::MAX_DEGREE;

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_LEVELS: [usize; 4] = [8, 16, 32, 64];
pub const DEFAULT_SOLVE_N: usize = 8;
/// 5832 cells, close to the mesh used for the published demo.
pub const DEFAULT_DEMO_N: usize = 54;
pub const DEFAULT_BETA_COEFF: f64 = 10.0;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUT: &str = "out";
pub const OUT_ENV: &str = "STOKES_DARCY_OUT";

#[derive(Debug, Parser)]
#[command(name = "stokes-darcy", version, about = "EDG-HDG solver for coupled Stokes-Darcy flow")]
pub struct Cli {
    /// `key = value` file supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", env = OUT_ENV)]
    pub out: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum CommandKind {
    Convergence,
    Solve,
    Demo,
    Mesh,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Manufactured-solution sweep over several meshes; writes a CSV table.
    Convergence(Flags),
    /// One manufactured solve; writes errors and a VTK field file.
    Solve(Flags),
    /// Surface/subsurface demo; writes a VTK file and a flux report.
    Demo(Flags),
    /// Writes a generated mesh, or validates one given with `--mesh`.
    Mesh(Flags),
}

impl Command {
    pub fn split(&self) -> (CommandKind, &Flags) {
        match self {
            Command::Convergence(f) => (CommandKind::Convergence, f),
            Command::Solve(f) => (CommandKind::Solve, f),
            Command::Demo(f) => (CommandKind::Demo, f),
            Command::Mesh(f) => (CommandKind::Mesh, f),
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Polynomial degree.
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated cells per unit edge, one mesh per entry.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
    /// Cells per unit edge of a single mesh.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// A positive number, or `case` for the case's own permeability.
    #[arg(long)]
    pub kappa: Option<KappaArg>,
    /// Penalty `beta = coeff * k^2`.
    #[arg(long)]
    pub beta_coeff: Option<f64>,
    /// Randomly perturb interior mesh vertices.
    #[arg(long)]
    pub perturb: bool,
    /// Seed for `--perturb`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Read the mesh from a file instead of generating it.
    #[arg(long, value_name = "FILE")]
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaArg {
    Case,
    Value(f64),
}

impl FromStr for KappaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.trim() == "case" {
            return Ok(KappaArg::Case);
        }
        s.trim()
            .parse()
            .map(KappaArg::Value)
            .map_err(|_| format!("expected a number or `case`, got `{s}`"))
    }
}

impl fmt::Display for KappaArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KappaArg::Case => write!(f, "case"),
            KappaArg::Value(v) => write!(f, "{v}"),
        }
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub k: usize,
    pub levels: Vec<usize>,
    pub n: usize,
    pub mu: f64,
    pub kappa: KappaArg,
    pub beta_coeff: f64,
    pub perturb_seed: Option<u64>,
    pub mesh: Option<PathBuf>,
    pub out: PathBuf,
}

impl RunConfig {
    /// Constant permeability for the manufactured case.
    pub fn manufactured_kappa(&self) -> f64 {
        match self.kappa {
            KappaArg::Case => 1.0,
            KappaArg::Value(v) => v,
        }
    }
}

/// Values read from a config file, keyed by flag name.
#[derive(Debug, Default)]
pub struct FileValues {
    values: BTreeMap<String, String>,
    source: PathBuf,
}

const FILE_KEYS: [&str; 10] = ["k", "levels", "n", "mu", "kappa", "beta-coeff", "perturb", "seed", "mesh", "out"];

impl FileValues {
    pub fn read(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text, path)
    }

    /// `#` starts a comment; keys may use `-` or `_`.
    pub fn parse(text: &str, source: &Path) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{}:{}: expected `key = value`", source.display(), i + 1))?;
            let key = key.trim().replace('_', "-");
            if !FILE_KEYS.contains(&key.as_str()) {
                return Err(format!("{}:{}: unknown key `{key}`", source.display(), i + 1));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(FileValues {
            values,
            source: source.to_path_buf(),
        })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| format!("{}: bad value for `{key}`: {e}", self.source.display())))
            .transpose()
    }

    fn levels(&self) -> Result<Option<Vec<usize>>, String> {
        self.values
            .get("levels")
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| format!("{}: bad value for `levels`: {e}", self.source.display()))
            })
            .transpose()
    }
}

/// Flags that make no sense for `command` when given explicitly.
fn check_combinations(command: CommandKind, f: &Flags) -> Result<(), String> {
    let given = [
        ("--k", f.k.is_some()),
        ("--levels", f.levels.is_some()),
        ("--n", f.n.is_some()),
        ("--mu", f.mu.is_some()),
        ("--kappa", f.kappa.is_some()),
        ("--beta-coeff", f.beta_coeff.is_some()),
        ("--mesh", f.mesh.is_some()),
    ];
    let forbidden: &[&str] = match command {
        CommandKind::Convergence => &["--n", "--mesh"],
        CommandKind::Solve => &["--levels"],
        CommandKind::Demo => &["--levels", "--mu"],
        CommandKind::Mesh => &["--k", "--levels", "--mu", "--kappa", "--beta-coeff"],
    };
    for (name, set) in given {
        if set && forbidden.contains(&name) {
            return Err(format!("{name} cannot be used with `{}`", command_name(command)));
        }
    }
    if f.seed.is_some() && !f.perturb {
        return Err("--seed requires --perturb".into());
    }
    if f.mesh.is_some() && (f.n.is_some() || f.perturb) {
        return Err("--mesh cannot be combined with --n or --perturb".into());
    }
    Ok(())
}

pub fn command_name(c: CommandKind) -> &'static str {
    match c {
        CommandKind::Convergence => "convergence",
        CommandKind::Solve => "solve",
        CommandKind::Demo => "demo",
        CommandKind::Mesh => "mesh",
    }
}

/// Merges flags over the file over defaults and validates the result.
///
/// File keys that do not apply to the subcommand are ignored, so one file
/// can serve several subcommands.
pub fn resolve(cli: &Cli, file: &FileValues) -> Result<RunConfig, String> {
    let (command, f) = cli.command.split();
    check_combinations(command, f)?;

    let k = f.k.or(file.get("k")?).unwrap_or(DEFAULT_K);
    let levels = f.levels.clone().or(file.levels()?).unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    let default_n = match command {
        CommandKind::Demo => DEFAULT_DEMO_N,
        _ => DEFAULT_SOLVE_N,
    };
    let n = f.n.or(file.get("n")?).unwrap_or(default_n);
    let mu = f.mu.or(file.get("mu")?).unwrap_or(1.0);
    let kappa = f.kappa.or(file.get("kappa")?).unwrap_or(KappaArg::Case);
    let beta_coeff = f.beta_coeff.or(file.get("beta-coeff")?).unwrap_or(DEFAULT_BETA_COEFF);
    let perturb = f.perturb || file.get::<bool>("perturb")?.unwrap_or(false);
    let seed = f.seed.or(file.get("seed")?);
    let mesh = f.mesh.clone().or(file.get::<PathBuf>("mesh")?);
    let out = cli.out.clone().or(file.get::<PathBuf>("out")?).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    if !(1..=MAX_DEGREE).contains(&k) {
        return Err(format!("k must be between 1 and {MAX_DEGREE}, got {k}"));
    }
    for (name, v) in [("mu", mu), ("beta-coeff", beta_coeff)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("{name} must be positive, got {v}"));
        }
    }
    if let KappaArg::Value(v) = kappa {
        if !(v > 0.0 && v.is_finite()) {
            return Err(format!("kappa must be positive, got {v}"));
        }
    }
    if command == CommandKind::Convergence {
        if levels.is_empty() {
            return Err("levels must not be empty".into());
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(format!("levels must be strictly increasing, got {levels:?}"));
        }
    }
    if seed.is_some() && !perturb {
        return Err("seed requires perturb".into());
    }
    Ok(RunConfig {
        command,
        k,
        levels,
        n,
        mu,
        kappa,
        beta_coeff,
        perturb_seed: perturb.then(|| seed.unwrap_or(DEFAULT_SEED)),
        mesh: if command == CommandKind::Convergence { None } else { mesh },
        out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("stokes-darcy").chain(args.iter().copied())).unwrap()
    }

    fn file(text: &str) -> FileValues {
        FileValues::parse(text, Path::new("test.conf")).unwrap()
    }

    #[test]
    fn defaults_reproduce_the_manufactured_sweep() {
        let c = resolve(&cli(&["convergence"]), &FileValues::default()).unwrap();
        assert_eq!(c.k, 3);
        assert_eq!(c.levels, vec![8, 16, 32, 64]);
        assert_eq!(c.beta_coeff, 10.0);
        assert_eq!(c.manufactured_kappa(), 1.0);
        assert_eq!(c.perturb_seed, None);
    }

    #[test]
    fn flags_win_over_file() {
        let f = file("k = 2\nmu = 0.5 # viscosity\nbeta_coeff = 20\n");
        let c = resolve(&cli(&["solve", "--k", "1"]), &f).unwrap();
        assert_eq!(c.k, 1);
        assert_eq!(c.mu, 0.5);
        assert_eq!(c.beta_coeff, 20.0);
    }

    #[test]
    fn file_levels_and_kappa_keyword() {
        let f = file("levels = 4, 8\nkappa = case\n");
        let c = resolve(&cli(&["convergence"]), &f).unwrap();
        assert_eq!(c.levels, vec![4, 8]);
        assert_eq!(c.kappa, KappaArg::Case);
        let c = resolve(&cli(&["convergence", "--kappa", "1e3"]), &f).unwrap();
        assert_eq!(c.kappa, KappaArg::Value(1e3));
    }

    #[test]
    fn unknown_file_key_rejected() {
        let err = FileValues::parse("colour = red\n", Path::new("x.conf")).unwrap_err();
        assert!(err.contains("unknown key `colour`"), "{err}");
        assert!(FileValues::parse("k 3\n", Path::new("x.conf")).is_err());
    }

    #[test]
    fn inconsistent_combinations() {
        let none = FileValues::default();
        for args in [
            &["demo", "--mu", "1"][..],
            &["demo", "--levels", "8,16"],
            &["convergence", "--n", "8"],
            &["mesh", "--k", "2"],
            &["solve", "--seed", "3"],
        ] {
            assert!(resolve(&cli(args), &none).is_err(), "{args:?}");
        }
    }

    #[test]
    fn file_keys_for_other_subcommands_are_ignored() {
        let f = file("levels = 8,16\nmu = 2\n");
        let c = resolve(&cli(&["demo"]), &f).unwrap();
        assert_eq!(c.n, DEFAULT_DEMO_N);
    }

    #[test]
    fn invalid_values() {
        let none = FileValues::default();
        assert!(resolve(&cli(&["solve", "--mu=-1"]), &none).is_err());
        assert!(resolve(&cli(&["solve", "--kappa", "0"]), &none).is_err());
        assert!(resolve(&cli(&["solve", "--k", "0"]), &none).is_err());
        assert!(resolve(&cli(&["convergence", "--levels", "16,8"]), &none).is_err());
        assert!(Cli::try_parse_from(["stokes-darcy", "solve", "--kappa", "soft"]).is_err());
    }

    #[test]
    fn perturb_uses_default_seed() {
        let c = resolve(&cli(&["mesh", "--perturb"]), &FileValues::default()).unwrap();
        assert_eq!(c.perturb_seed, Some(DEFAULT_SEED));
        let c = resolve(&cli(&["mesh", "--perturb", "--seed", "9"]), &FileValues::default()).unwrap();
        assert_eq!(c.perturb_seed, Some(9));
    }
}
