use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use freerep_core::generate::{endpoint_f2, search};
use freerep_core::{ClassLabel, MatrixSystem, NormalizedSystem};
use rayon::prelude::*;
use serde::Serialize;

use crate::io::{validate as validate_loaded, SystemFile};
use crate::report::{build_report, probe_series, Options, Probe, ReportFile};
use crate::CliError;

/// What a subcommand printed and how the process should exit.
#[derive(Debug, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
}

fn write_or_print(out: Option<&Path>, text: &str, stdout: &mut String) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            stdout.push_str(text);
            if !text.ends_with('\n') {
                stdout.push('\n');
            }
            Ok(())
        }
    }
}

pub fn load_system(path: &Path) -> Result<(MatrixSystem, Option<String>), CliError> {
    let file = SystemFile::read(path)?;
    let loaded = file.load()?;
    let sys = loaded.spec.build().map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok((sys, loaded.label))
}

pub fn validate(path: &Path, tol: f64) -> Result<Outcome, CliError> {
    let file = SystemFile::read(path)?;
    let loaded = file.load()?;
    let problems = validate_loaded(&loaded, tol);
    let mut out = Outcome::default();
    if problems.is_empty() {
        let sys = loaded.spec.build()?;
        let note = if sys.is_irreducible() { "irreducible" } else { "reducible" };
        writeln!(out.stdout, "ok: {} letters, dims {:?}, {note}", sys.letters(), sys.dims()).unwrap();
    } else {
        out.code = 1;
        for p in problems {
            writeln!(out.stdout, "error: {p}").unwrap();
        }
    }
    Ok(out)
}

pub fn normalize(path: &Path, out: Option<&Path>, opts: &Options) -> Result<Outcome, CliError> {
    let (sys, label) = load_system(path)?;
    let ns = sys.normalize_with(&opts.tol)?;
    let mut o = Outcome::default();
    write_or_print(out, &SystemFile::from_normalized(&ns, label).to_json(), &mut o.stdout)?;
    Ok(o)
}

fn report_code(r: &ReportFile) -> i32 {
    if r.verdict == "undecided" || r.partial {
        2
    } else {
        0
    }
}

fn report_json(r: &ReportFile) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("reports serialize");
    s.push('\n');
    s
}

fn classify_one(path: &Path, opts: &Options) -> Result<ReportFile, CliError> {
    let (sys, label) = load_system(path)?;
    let ns = sys.normalize_with(&opts.tol)?;
    Ok(build_report(&ns, label, opts)?)
}

/// Classifies each file; several files run in parallel and need `out_dir`.
pub fn classify(paths: &[PathBuf], out: Option<&Path>, out_dir: Option<&Path>, opts: &Options) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    if paths.len() == 1 && out_dir.is_none() {
        let r = classify_one(&paths[0], opts)?;
        o.code = report_code(&r);
        write_or_print(out, &report_json(&r), &mut o.stdout)?;
        return Ok(o);
    }
    if out.is_some() {
        return Err(CliError::Usage("--out takes a single input; use --out-dir for several".into()));
    }
    let dir = out_dir.ok_or_else(|| CliError::Usage("several inputs need --out-dir".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let results: Vec<(PathBuf, Result<ReportFile, CliError>)> = paths
        .par_iter()
        .map(|p| (p.clone(), classify_one(p, opts)))
        .collect();
    for (p, r) in results {
        let stem = p.file_stem().map_or("system".into(), |s| s.to_string_lossy().into_owned());
        match r {
            Ok(r) => {
                let target = dir.join(format!("{stem}.report.json"));
                write_or_print(Some(&target), &report_json(&r), &mut o.stdout)?;
                o.code = o.code.max(report_code(&r));
                writeln!(o.stdout, "{}: {} {}", p.display(), r.class.as_deref().unwrap_or("-"), r.verdict).unwrap();
            }
            Err(e) => {
                o.code = o.code.max(e.exit_code());
                writeln!(o.stdout, "{}: error: {e}", p.display()).unwrap();
            }
        }
    }
    Ok(o)
}

#[derive(Serialize)]
struct SeriesJson<'a> {
    vector: &'a str,
    requested_nmax: usize,
    truncated: bool,
    s_n: &'a [f64],
    haagerup_violation: Option<usize>,
}

pub fn series_csv(s: &[f64]) -> String {
    let mut out = String::from("n,s_n\n");
    for (n, v) in s.iter().enumerate() {
        writeln!(out, "{n},{v}").unwrap();
    }
    out
}

/// Sphere sums of a vector; with `out` the CSV goes there and a JSON mirror
/// next to it.
pub fn series(path: &Path, out: Option<&Path>, opts: &Options) -> Result<Outcome, CliError> {
    let (sys, _) = load_system(path)?;
    let ns = sys.normalize_with(&opts.tol)?;
    series_for(&ns, out, opts)
}

pub fn series_for(ns: &NormalizedSystem, out: Option<&Path>, opts: &Options) -> Result<Outcome, CliError> {
    let (s, vector) = probe_series(ns, opts)?;
    let mut o = Outcome::default();
    write_or_print(out, &series_csv(&s.s), &mut o.stdout)?;
    if let Some(p) = out {
        let mirror = SeriesJson {
            vector: &vector,
            requested_nmax: s.requested_nmax,
            truncated: s.truncated,
            s_n: &s.s,
            haagerup_violation: s.haagerup_violation(),
        };
        let mut text = serde_json::to_string_pretty(&mirror).expect("series serialize");
        text.push('\n');
        write_or_print(Some(&p.with_extension("json")), &text, &mut o.stdout)?;
    }
    if s.truncated {
        o.code = 2;
        eprintln!("warning: enumeration budget reached at n = {}", s.nmax());
    }
    if let Some(n) = s.haagerup_violation() {
        return Err(CliError::Usage(format!("Haagerup bound violated at n = {n}")));
    }
    Ok(o)
}

pub const DEMOS: [&str; 3] = ["endpoint-f2", "random-ai", "random-bi"];

/// Bundled example run. The random demos search a seeded family for the
/// first instance of the class.
pub fn demo(name: &str, out: Option<&Path>, opts: &Options) -> Result<Outcome, CliError> {
    let mut opts = opts.clone();
    let ns = match name {
        "endpoint-f2" => {
            if opts.probe == Probe::SeededW0 {
                opts.probe = Probe::Edge("e|a".into());
            }
            endpoint_f2::<f64>().normalize_with(&opts.tol)?
        }
        "random-ai" | "random-bi" => {
            let label = if name == "random-ai" { ClassLabel::AI } else { ClassLabel::BI };
            search(label, opts.seed, 1, 4000)?.remove(0).system
        }
        _ => {
            return Err(CliError::Usage(format!(
                "unknown demo {name:?}; choose one of {}",
                DEMOS.join(", ")
            )))
        }
    };
    let r = build_report(&ns, Some(name.to_string()), &opts)?;
    let mut o = Outcome {
        code: report_code(&r),
        ..Default::default()
    };
    write_or_print(out, &report_json(&r), &mut o.stdout)?;
    Ok(o)
}
