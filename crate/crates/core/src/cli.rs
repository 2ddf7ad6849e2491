//! The `specmult` command line: config ingestion, check orchestration and
//! report emission.
//!
//! Settings come from an optional config file of `key = value` lines under
//! `[section]` headers, overridden by command-line options. Reports go to the
//! output directory, which `SPECMULT_OUT` overrides.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::kato::PotentialFamily;
use crate::kernel::KernelOperator;
use crate::nls::{check_nls, InitialData, NlsOptions};
use crate::radial::{build_grid, GridScheme, RadialGrid};
use crate::symbol::SymbolSpec;
use crate::verify::{
    check_dispersive, check_kato, check_key_lemma, check_lemma_3_1, check_norm_equivalence, check_oracle_equivalence,
    check_oscillatory_and_sums, check_strichartz, failure, fmt_f64, oracle_record, CheckRecord, Setup,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_OUT: &str = "specmult-out";

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "out",
    "grid.n",
    "grid.rmax",
    "grid.scheme",
    "potential.spec",
    "verify.check",
    "verify.symbol",
    "verify.p",
    "verify.q",
    "verify.r",
    "verify.s",
    "multiplier.symbol",
    "nls.data",
    "nls.t",
    "nls.tol",
    "nls.sign",
    "nls.slices",
    "nls.substeps",
    "nls.max_iter",
];

/// Flat settings keyed by `section.key`; top-level keys have no prefix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{line}'", no + 1)))?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            cfg.set(&key, v.trim()).map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown setting '{key}'")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Config(format!("setting '{key}': cannot parse '{s}'"))),
        }
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        self.parsed(key, default)
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        self.parsed(key, default)
    }

    pub fn seed(&self) -> Result<u64> {
        self.parsed("seed", crate::bank::DEFAULT_SEED)
    }

    pub fn grid(&self) -> Result<Arc<RadialGrid>> {
        let scheme = match self.get("grid.scheme").unwrap_or("uniform") {
            "uniform" => GridScheme::Uniform,
            "graded" => GridScheme::graded(),
            s => match s.strip_prefix("graded:").map(str::parse::<f64>) {
                Some(Ok(gamma)) => GridScheme::Graded { gamma },
                _ => return Err(Error::Config(format!("unknown grid scheme '{s}'"))),
            },
        };
        build_grid(self.f64("grid.rmax", 20.0)?, self.usize("grid.n", 400)?, scheme)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn potential(&self) -> Result<PotentialFamily> {
        self.get("potential.spec").unwrap_or("zero").parse()
    }

    pub fn symbol(&self, key: &str, default: &str) -> Result<SymbolSpec> {
        self.get(key).unwrap_or(default).parse()
    }

    /// Grid, potential and seed. The potential is sampled once here so that
    /// unreadable files surface as configuration errors.
    pub fn setup(&self) -> Result<Setup> {
        let setup = Setup::new(self.grid()?, self.potential()?, self.seed()?);
        setup.potential()?;
        Ok(setup)
    }

    pub fn nls(&self) -> Result<(InitialData, f64, f64, NlsOptions)> {
        let d = NlsOptions::default();
        let opts = NlsOptions {
            sign: self.f64("nls.sign", d.sign)?,
            slices: self.usize("nls.slices", d.slices)?,
            substeps: self.usize("nls.substeps", d.substeps)?,
            max_iter: self.usize("nls.max_iter", d.max_iter)?,
            data_bound: None,
        };
        let data = self.get("nls.data").unwrap_or("gaussian:width=1,grad=0.1").parse()?;
        Ok((data, self.f64("nls.t", 1.0)?, self.f64("nls.tol", 1e-12)?, opts))
    }

    /// Output directory: `SPECMULT_OUT`, else the `out` setting.
    pub fn out_dir(&self) -> PathBuf {
        match std::env::var_os("SPECMULT_OUT") {
            Some(p) if !p.is_empty() => PathBuf::from(p),
            _ => PathBuf::from(self.get("out").unwrap_or(DEFAULT_OUT)),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "specmult", version, about = "Spectral multipliers of radial Schrodinger operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file: `key = value` lines under `[section]` headers.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Potential family, e.g. `well:depth=3,radius=1` or `file:path`.
    #[arg(long)]
    potential: Option<String>,
    /// Grid settings, e.g. `n=400,rmax=20,scheme=uniform`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overridden by SPECMULT_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other setting as `section.key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Kato-class membership, thresholds and resonance indicator.
    Kato(Common),
    /// Run one inequality check.
    Verify {
        /// lemma_3_1 | key_lemma | dispersive | strichartz | norm_equivalence | oscillatory | oracle
        check: Option<String>,
        #[arg(long)]
        symbol: Option<String>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        s: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Build m(H) P_c, compare it with the oracle and write its kernel.
    Multiplier {
        #[arg(long)]
        symbol: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Quintic NLS contraction experiment.
    Nls {
        /// Initial data, e.g. `gaussian:width=1,grad=0.1`.
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        /// +1 defocusing, -1 focusing.
        #[arg(long, allow_hyphen_values = true)]
        sign: Option<f64>,
        #[arg(long)]
        slices: Option<usize>,
        #[arg(long)]
        substeps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Every check for one potential.
    Suite(Common),
    /// Aggregate the records in a directory.
    Report {
        /// Directory of records (defaults to the output directory).
        dir: Option<PathBuf>,
    },
}

impl Common {
    fn config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(p) = &self.potential {
            cfg.set("potential.spec", p)?;
        }
        if let Some(g) = &self.grid {
            for item in g.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (k, v) = item
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("grid: expected key=value, got '{item}'")))?;
                cfg.set(&format!("grid.{}", k.trim()), v.trim())?;
            }
        }
        if let Some(s) = self.seed {
            cfg.set("seed", &s.to_string())?;
        }
        if let Some(o) = &self.out {
            cfg.set("out", &o.to_string_lossy())?;
        }
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got '{item}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

fn set_opt<T: ToString>(cfg: &mut Config, key: &str, v: &Option<T>) -> Result<()> {
    if let Some(v) = v {
        cfg.set(key, &v.to_string())?;
    }
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("specmult: {e}");
            EXIT_USAGE
        }
    }
}

/// `Err` means a usage or configuration problem; failed checks come back as
/// records.
fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Kato(common) => {
            let cfg = common.config()?;
            let setup = cfg.setup()?;
            emit(&cfg.out_dir(), "kato", &[check_kato(&setup)])
        }
        Command::Verify {
            check,
            symbol,
            p,
            q,
            r,
            s,
            common,
        } => {
            let mut cfg = common.config()?;
            set_opt(&mut cfg, "verify.check", &check)?;
            set_opt(&mut cfg, "verify.symbol", &symbol)?;
            set_opt(&mut cfg, "verify.p", &p)?;
            set_opt(&mut cfg, "verify.q", &q)?;
            set_opt(&mut cfg, "verify.r", &r)?;
            set_opt(&mut cfg, "verify.s", &s)?;
            let name = cfg
                .get("verify.check")
                .ok_or_else(|| Error::Config("verify needs a check name".into()))?
                .to_string();
            let rec = run_check(&cfg, &name)?;
            emit(&cfg.out_dir(), &format!("verify_{name}"), &[rec])
        }
        Command::Multiplier { symbol, common } => {
            let mut cfg = common.config()?;
            set_opt(&mut cfg, "multiplier.symbol", &symbol)?;
            run_multiplier(&cfg)
        }
        Command::Nls {
            data,
            t,
            tol,
            sign,
            slices,
            substeps,
            common,
        } => {
            let mut cfg = common.config()?;
            set_opt(&mut cfg, "nls.data", &data)?;
            set_opt(&mut cfg, "nls.t", &t)?;
            set_opt(&mut cfg, "nls.tol", &tol)?;
            set_opt(&mut cfg, "nls.sign", &sign)?;
            set_opt(&mut cfg, "nls.slices", &slices)?;
            set_opt(&mut cfg, "nls.substeps", &substeps)?;
            run_nls(&cfg)
        }
        Command::Suite(common) => {
            let cfg = common.config()?;
            let setup = cfg.setup()?;
            let mut records = vec![check_kato(&setup), check_lemma_3_1(&setup)];
            for name in ["oracle", "key_lemma", "dispersive", "strichartz"] {
                records.push(run_check(&cfg, name)?);
            }
            for (s, r) in [(1.0, 2.0), (2.0, 1.2)] {
                records.push(record_or_failure(&setup, "norm_equivalence", check_norm_equivalence(&setup, s, r))?);
            }
            records.push(run_check(&cfg, "oscillatory")?);
            let (data, t, tol, opts) = cfg.nls()?;
            records.push(check_nls(&setup, &data, t, tol, &opts)?.0);
            emit(&cfg.out_dir(), "suite", &records)
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or_else(|| Config::default().out_dir());
            report(&dir)
        }
    }
}

/// Parameter errors are usage errors; anything else is a failed check.
fn record_or_failure(setup: &Setup, check: &str, res: Result<CheckRecord>) -> Result<CheckRecord> {
    match res {
        Ok(r) => Ok(r),
        Err(e @ (Error::Parameter(_) | Error::Config(_))) => Err(e),
        Err(e) => Ok(failure(
            setup.record(check, serde_json::json!({ "potential": setup.family.label() })),
            &e,
        )),
    }
}

/// Runs one named check against a configuration.
pub fn run_check(cfg: &Config, name: &str) -> Result<CheckRecord> {
    let setup = cfg.setup()?;
    let symbol = || cfg.symbol("verify.symbol", "constant:value=1");
    match name {
        "lemma_3_1" => Ok(check_lemma_3_1(&setup)),
        "kato" => Ok(check_kato(&setup)),
        "oracle" => Ok(check_oracle_equivalence(&setup, &cfg.symbol("multiplier.symbol", "heat:t=0.5")?)),
        "key_lemma" => record_or_failure(&setup, name, check_key_lemma(&setup, &symbol()?, cfg.f64("verify.p", 1.5)?)),
        "dispersive" => record_or_failure(&setup, name, check_dispersive(&setup)),
        "strichartz" => {
            let q = cfg.f64("verify.q", 10.0)?;
            let r = cfg.f64("verify.r", 30.0 / 13.0)?;
            record_or_failure(&setup, name, check_strichartz(&setup, q, r))
        }
        "norm_equivalence" => {
            let s = cfg.f64("verify.s", 1.0)?;
            let r = cfg.f64("verify.r", 2.0)?;
            record_or_failure(&setup, name, check_norm_equivalence(&setup, s, r))
        }
        "oscillatory" => record_or_failure(&setup, name, check_oscillatory_and_sums(&symbol()?, setup.seed)),
        _ => Err(Error::Config(format!(
            "unknown check '{name}' (expected lemma_3_1, key_lemma, dispersive, strichartz, norm_equivalence, oscillatory, oracle)"
        ))),
    }
}

fn run_multiplier(cfg: &Config) -> Result<i32> {
    let setup = cfg.setup()?;
    let m = cfg.symbol("multiplier.symbol", "heat:t=0.5")?;
    let (rec, st) = oracle_record(&setup, &m);
    let dir = cfg.out_dir();
    if let Some(st) = st {
        write_file(&dir.join("multiplier_kernel.csv"), &kernel_csv(&st.operator(), &setup))?;
    }
    emit(&dir, "multiplier", &[rec])
}

fn kernel_csv(k: &KernelOperator, setup: &Setup) -> String {
    let r = setup.grid.nodes();
    let w = setup.grid.weights();
    let m = k.value_matrix();
    let mut s = String::from("r,r_prime,re,im,n,r_max,seed\n");
    let tail = format!(",{},{},{}", r.len(), fmt_f64(setup.grid.r_max()), setup.seed);
    for i in 0..r.len() {
        for j in 0..r.len() {
            let z = m[(i, j)] / w[j];
            let _ = writeln!(s, "{},{},{},{}{tail}", fmt_f64(r[i]), fmt_f64(r[j]), fmt_f64(z.re), fmt_f64(z.im));
        }
    }
    s
}

fn run_nls(cfg: &Config) -> Result<i32> {
    let setup = cfg.setup()?;
    let (data, t, tol, opts) = cfg.nls()?;
    let (rec, norms) = check_nls(&setup, &data, t, tol, &opts)?;
    let dir = cfg.out_dir();
    if let Some(norms) = norms {
        let tail = format!(",{},{},{}", setup.grid.len(), fmt_f64(setup.grid.r_max()), setup.seed);
        let mut s = String::from("t,mass,h1,l10,n,r_max,seed\n");
        for r in &norms.slices {
            let _ = writeln!(s, "{},{},{},{}{tail}", fmt_f64(r.t), fmt_f64(r.mass), fmt_f64(r.h1), fmt_f64(r.l10));
        }
        write_file(&dir.join("nls_slices.csv"), &s)?;
    }
    emit(&dir, "nls", &[rec])
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.jsonl` and `<stem>.csv`, prints one line per record and
/// returns the exit code.
fn emit(dir: &Path, stem: &str, records: &[CheckRecord]) -> Result<i32> {
    let mut jsonl = String::new();
    let mut csv = format!("{}\n", CheckRecord::CSV_HEADER);
    for r in records {
        jsonl.push_str(&r.to_json());
        jsonl.push('\n');
        csv.push_str(&r.csv_row());
        csv.push('\n');
        println!("{} {} {}", if r.pass { "PASS" } else { "FAIL" }, r.check, r.params);
    }
    write_file(&dir.join(format!("{stem}.jsonl")), &jsonl)?;
    write_file(&dir.join(format!("{stem}.csv")), &csv)?;
    Ok(if records.iter().all(|r| r.pass) { EXIT_PASS } else { EXIT_FAIL })
}

/// Aggregates every `*.jsonl` record in `dir` into `summary.csv` and
/// `summary.txt`, failing checks first, plus plot-ready CSVs for decay fits
/// and refinement curves.
pub fn report(dir: &Path) -> Result<i32> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut records = Vec::new();
    for path in &files {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let value: Value = serde_json::from_str(line)
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), no + 1)))?;
            records.push(CheckRecord::from_value(&value)?);
        }
    }
    if records.is_empty() {
        return Err(Error::Config(format!("no records in {}", dir.display())));
    }
    records.sort_by_key(|r| r.pass);

    let mut csv = format!("{}\n", CheckRecord::CSV_HEADER);
    let mut txt = format!("{:<20} {:<6} {:>24} {:>24}  params\n", "check", "result", "constant", "margin");
    for (i, r) in records.iter().enumerate() {
        csv.push_str(&r.csv_row());
        csv.push('\n');
        let _ = writeln!(
            txt,
            "{:<20} {:<6} {:>24} {:>24}  {}",
            r.check,
            if r.pass { "PASS" } else { "FAIL" },
            fmt_f64(r.constant),
            fmt_f64(r.margin),
            r.params
        );
        if let Some(points) = r.details.get("points").and_then(Value::as_array) {
            let mut s = String::from("log_t,log_sup\n");
            for p in points {
                if let (Some(x), Some(y)) = (p[0].as_f64(), p[1].as_f64()) {
                    let _ = writeln!(s, "{},{}", fmt_f64(x), fmt_f64(y));
                }
            }
            write_file(&dir.join(format!("decay_{i:03}_{}.csv", r.check)), &s)?;
        }
        if let (Some(st), Some(g)) = (r.details.get("stability"), &r.grid) {
            if let (Some(base), Some(refined)) = (st["base"].as_f64(), st["refined_grid"].as_f64()) {
                let s = format!("n,constant\n{},{}\n{},{}\n", g.n, fmt_f64(base), 2 * g.n, fmt_f64(refined));
                write_file(&dir.join(format!("refinement_{i:03}_{}.csv", r.check)), &s)?;
            }
        }
    }
    let failed = records.iter().filter(|r| !r.pass).count();
    let _ = writeln!(txt, "\n{} checks, {} passed, {} failed", records.len(), records.len() - failed, failed);
    write_file(&dir.join("summary.csv"), &csv)?;
    write_file(&dir.join("summary.txt"), &txt)?;
    print!("{txt}");
    Ok(if failed == 0 { EXIT_PASS } else { EXIT_FAIL })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_sections_and_overrides() {
        let cfg = Config::parse("seed = 7\n# comment\n[grid]\nn = 120 # inline\nrmax=8\n[potential]\nspec = well:depth=2,radius=1\n")
            .unwrap();
        assert_eq!(cfg.seed().unwrap(), 7);
        let g = cfg.grid().unwrap();
        assert_eq!((g.len(), g.r_max()), (120, 8.0));
        assert_eq!(cfg.potential().unwrap().label(), "well:depth=2,radius=1");
        assert!(Config::parse("[grid]\nsize = 3\n").is_err());
        assert!(Config::parse("just text\n").is_err());
        let bad = Config::parse("[grid]\nn = many\n").unwrap();
        assert!(matches!(bad.grid(), Err(Error::Config(_))));
        assert_eq!(Config::default().seed().unwrap(), 42);
    }

    fn run_in(dir: &Path, args: &[&str]) -> i32 {
        let out = dir.to_str().unwrap();
        let mut full = vec!["specmult"];
        full.extend_from_slice(args);
        if !matches!(args.first(), Some(&"report")) {
            full.extend_from_slice(&["--out", out]);
        }
        run(full)
    }

    fn record(check: &str, pass: bool, constant: f64) -> String {
        format!(
            r#"{{"check":"{check}","params":{{"k":1}},"constant":{constant},"margin":0.5,"pass":{pass},"grid":{{"n":100,"r_max":10.0,"scheme":"uniform"}},"seed":42,"bank_hash":null,"details":{{}}}}"#
        )
    }

    #[test]
    fn usage_errors_exit_two() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        assert_eq!(run_in(d, &["kato", "--potential", "file:/nonexistent/v.csv", "--grid", "n=50,rmax=5"]), 2);
        assert_eq!(run_in(d, &["verify", "nonsense", "--grid", "n=40,rmax=4"]), 2);
        assert_eq!(run_in(d, &["kato", "--grid", "n=lots"]), 2);
        assert_eq!(run(["specmult", "frobnicate"]), 2);
        assert!(fs::read_dir(d).unwrap().next().is_none());
    }

    #[test]
    fn free_multiplier_writes_kernel() {
        let tmp = tempfile::tempdir().unwrap();
        assert_eq!(run_in(tmp.path(), &["multiplier", "--symbol", "heat:t=0.5", "--grid", "n=60,rmax=6"]), 0);
        let kernel = fs::read_to_string(tmp.path().join("multiplier_kernel.csv")).unwrap();
        let mut lines = kernel.lines();
        assert_eq!(lines.next(), Some("r,r_prime,re,im,n,r_max,seed"));
        assert_eq!(lines.count(), 60 * 60);
        let rec = fs::read_to_string(tmp.path().join("multiplier.jsonl")).unwrap();
        let rec = CheckRecord::from_value(&serde_json::from_str(rec.trim()).unwrap()).unwrap();
        assert!(rec.pass && rec.constant < 1e-12);
    }

    #[test]
    fn report_lists_failures_first() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        let a: Vec<String> = (0..6).map(|i| record("kato", i % 3 != 0, i as f64)).collect();
        let b: Vec<String> = (0..4).map(|i| record("oracle", i != 2, i as f64)).collect();
        fs::write(d.join("a.jsonl"), a.join("\n") + "\n").unwrap();
        fs::write(d.join("b.jsonl"), b.join("\n") + "\n").unwrap();

        assert_eq!(run_in(d, &["report", d.to_str().unwrap()]), 1);
        let first = fs::read(d.join("summary.csv")).unwrap();
        let csv = String::from_utf8(first.clone()).unwrap();
        let passes: Vec<bool> = csv.lines().skip(1).map(|r| r.split(',').nth(4) == Some("true")).collect();
        assert_eq!(passes.len(), 10);
        assert!(passes[..3].iter().all(|p| !p) && passes[3..].iter().all(|p| *p));

        assert_eq!(report(d).unwrap(), 1);
        assert_eq!(first, fs::read(d.join("summary.csv")).unwrap());
    }

    #[test]
    fn report_on_empty_directory_fails() {
        let tmp = tempfile::tempdir().unwrap();
        assert_eq!(run_in(tmp.path(), &["report", tmp.path().to_str().unwrap()]), 2);
    }

    #[test]
    fn graded_scheme_parses() {
        let cfg = Config::parse("[grid]\nscheme = graded:1.5\nn = 50\nrmax = 5\n").unwrap();
        assert_eq!(cfg.grid().unwrap().scheme(), GridScheme::Graded { gamma: 1.5 });
        let cfg = Config::parse("[grid]\nscheme = spiral\n").unwrap();
        assert!(cfg.grid().is_err());
    }
}
