//! The JSON system file: generators, per-letter dimensions and `H` blocks
//! keyed `"b|a"`, each a row-major matrix of `[re, im]` pairs.

use std::collections::BTreeMap;
use std::path::Path;

use freerep_core::scalar::cplx;
use freerep_core::system::{compatibility_residual, ViolationKind};
use freerep_core::{Alphabet, CMat, NormalizedSystem, SystemSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Row-major matrix of `[re, im]` entries.
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub generators: Vec<String>,
    pub dims: BTreeMap<String, usize>,
    #[serde(rename = "H")]
    pub h: BTreeMap<String, MatrixJson>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<BTreeMap<String, MatrixJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A parsed file: the block data plus any stored forms.
pub struct Loaded {
    pub spec: SystemSpec,
    pub forms: Option<Vec<CMat>>,
    pub label: Option<String>,
}

pub fn matrix_from_json(m: &MatrixJson, what: &str) -> Result<CMat, CliError> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    if m.iter().any(|r| r.len() != cols) {
        return Err(CliError::Invalid(format!("{what}: rows have different lengths")));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| cplx(m[i][j][0], m[i][j][1])))
}

pub fn matrix_to_json(m: &CMat) -> MatrixJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

impl SystemFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("system files serialize")
    }

    /// Checks the file-level rules and converts to block data. Structural
    /// problems that the core validator also reports are left to it.
    pub fn load(&self) -> Result<Loaded, CliError> {
        let al = Alphabet::new(self.generators.iter().cloned()).map_err(|e| CliError::Invalid(e.to_string()))?;
        let letter = |name: &str, ctx: &str| {
            al.parse_letter(name)
                .ok_or_else(|| CliError::Invalid(format!("{ctx}: unknown letter {name:?}")))
        };
        let mut dims = vec![0usize; al.size()];
        for (name, &n) in &self.dims {
            dims[letter(name, "dims")?] = n;
        }
        let missing: Vec<String> = al.letters().filter(|&a| !self.dims.contains_key(&al.letter_name(a))).map(|a| al.letter_name(a)).collect();
        if !missing.is_empty() {
            return Err(CliError::Invalid(format!("dims: missing letters {}", missing.join(", "))));
        }
        let mut blocks = BTreeMap::new();
        for (key, m) in &self.h {
            let (b, a) = key
                .split_once('|')
                .ok_or_else(|| CliError::Invalid(format!("H key {key:?} is not of the form \"b|a\"")))?;
            let (b, a) = (letter(b, "H")?, letter(a, "H")?);
            if freerep_core::inv(a) == b {
                return Err(CliError::Invalid(format!(
                    "H[{key}] must be absent: ba = e forces H_ba = 0"
                )));
            }
            blocks.insert((b, a), matrix_from_json(m, &format!("H[{key}]"))?);
        }
        let forms = match &self.b {
            None => None,
            Some(map) => {
                let mut out = vec![None; al.size()];
                for (name, m) in map {
                    out[letter(name, "B")?] = Some(matrix_from_json(m, &format!("B[{name}]"))?);
                }
                let forms: Option<Vec<CMat>> = out.into_iter().collect();
                Some(forms.ok_or_else(|| CliError::Invalid("B must list every letter".into()))?)
            }
        };
        Ok(Loaded {
            spec: SystemSpec { alphabet: al, dims, blocks },
            forms,
            label: self.label.clone(),
        })
    }

    /// File for a normalized system, including its forms.
    pub fn from_normalized(ns: &NormalizedSystem, label: Option<String>) -> Self {
        let al = ns.alphabet();
        let mut dims = BTreeMap::new();
        let mut h = BTreeMap::new();
        let mut b = BTreeMap::new();
        for a in al.letters() {
            dims.insert(al.letter_name(a), ns.dims()[a]);
            b.insert(al.letter_name(a), matrix_to_json(ns.b(a)));
            for c in al.letters() {
                let m = ns.h(c, a);
                if m.iter().any(|z| z.re != 0.0 || z.im != 0.0) {
                    h.insert(format!("{}|{}", al.letter_name(c), al.letter_name(a)), matrix_to_json(m));
                }
            }
        }
        Self {
            generators: al.generator_names().to_vec(),
            dims,
            h,
            b: Some(b),
            label,
        }
    }
}

/// Every problem with a loaded file, as messages (empty = valid).
pub fn validate(loaded: &Loaded, tol: f64) -> Vec<String> {
    let violations = loaded.spec.validate();
    let mut out: Vec<String> = violations.iter().map(|v| v.message.clone()).collect();
    let structural = violations.iter().any(|v| v.kind != ViolationKind::AllZero);
    if let (Some(forms), false) = (&loaded.forms, structural) {
        if let Ok(sys) = loaded.spec.build() {
            match compatibility_residual(&sys, forms) {
                Ok(r) if r > tol => out.push(format!("stored B violates the compatibility condition (residual {r:.2e})")),
                Err(e) => out.push(format!("stored B: {e}")),
                _ => {}
            }
        }
    }
    out
}
