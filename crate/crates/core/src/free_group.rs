//! Reduced words of the free group on `k` generators and its Cayley tree.
//!
//! Letters are small integers: generator `i` is `2i`, its inverse `2i + 1`,
//! so the involution is `a ^ 1`.

use std::fmt;

use crate::error::{Error, Result};

pub type Letter = usize;

#[inline]
pub fn inv(a: Letter) -> Letter {
    a ^ 1
}

/// Ordered generator names together with the derived letter set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Alphabet {
    names: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::Alphabet(format!(
                "need at least 2 generators, got {}",
                names.len()
            )));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n == "e" || n.contains('^') || n.contains('|') || n.contains('.') {
                return Err(Error::Alphabet(format!("invalid generator name {n:?}")));
            }
            if n.chars().any(char::is_whitespace) {
                return Err(Error::Alphabet(format!("invalid generator name {n:?}")));
            }
            if names[..i].contains(n) {
                return Err(Error::Alphabet(format!("duplicate generator {n:?}")));
            }
        }
        Ok(Self { names })
    }

    /// Alphabet with generators `a, b, c, ...` (then `g4, g5, ...`).
    pub fn standard(k: usize) -> Self {
        let names: Vec<String> = (0..k)
            .map(|i| {
                if i < 8 {
                    ((b'a' + i as u8) as char).to_string()
                } else {
                    format!("g{i}")
                }
            })
            .collect();
        Self::new(names).expect("standard alphabet is valid")
    }

    /// Number of generators `k`.
    pub fn rank(&self) -> usize {
        self.names.len()
    }

    /// Number of letters `2k`.
    pub fn size(&self) -> usize {
        2 * self.names.len()
    }

    pub fn letters(&self) -> std::ops::Range<Letter> {
        0..self.size()
    }

    pub fn generators(&self) -> impl Iterator<Item = Letter> {
        (0..self.rank()).map(|i| 2 * i)
    }

    pub fn generator_names(&self) -> &[String] {
        &self.names
    }

    pub fn letter_name(&self, a: Letter) -> String {
        let base = &self.names[a / 2];
        if a % 2 == 0 {
            base.clone()
        } else {
            format!("{base}^-1")
        }
    }

    pub fn parse_letter(&self, s: &str) -> Option<Letter> {
        let (base, inverse) = match s.strip_suffix("^-1") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let i = self.names.iter().position(|n| n == base)?;
        Some(2 * i + usize::from(inverse))
    }

    /// Parses a word such as `ab^-1a`, `a.b^-1.a` or `e`; the result is reduced.
    pub fn parse_word(&self, s: &str) -> Result<Word> {
        let s = s.trim();
        if s == "e" || s.is_empty() {
            return Ok(Word::identity());
        }
        let mut letters = Vec::new();
        if s.contains('.') || s.contains(char::is_whitespace) {
            for tok in s.split(|c: char| c == '.' || c.is_whitespace()) {
                if tok.is_empty() {
                    continue;
                }
                letters.push(
                    self.parse_letter(tok)
                        .ok_or_else(|| Error::Parse(format!("unknown letter {tok:?}")))?,
                );
            }
        } else {
            // Greedy longest match over generator names.
            let mut rest = s;
            while !rest.is_empty() {
                let best = self
                    .names
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| rest.starts_with(n.as_str()))
                    .max_by_key(|(_, n)| n.len())
                    .ok_or_else(|| Error::Parse(format!("cannot parse word {s:?} at {rest:?}")))?;
                rest = &rest[best.1.len()..];
                let mut a = 2 * best.0;
                if let Some(r) = rest.strip_prefix("^-1") {
                    rest = r;
                    a += 1;
                }
                letters.push(a);
            }
        }
        Ok(Word::reduce(letters))
    }

    pub fn format_word(&self, w: &Word) -> String {
        if w.is_identity() {
            return "e".to_string();
        }
        let multi = self.names.iter().any(|n| n.chars().count() > 1);
        let parts: Vec<String> = w.letters().iter().map(|&a| self.letter_name(a)).collect();
        if multi {
            parts.join(".")
        } else {
            parts.concat()
        }
    }

    fn check(&self, w: &Word) -> Result<()> {
        match w.letters().iter().find(|&&a| a >= self.size()) {
            Some(a) => Err(Error::Alphabet(format!(
                "letter {a} outside alphabet of size {}",
                self.size()
            ))),
            None => Ok(()),
        }
    }

    /// Group law on reduced words over this alphabet.
    pub fn multiply(&self, x: &Word, y: &Word) -> Result<Word> {
        self.check(x)?;
        self.check(y)?;
        Ok(x.mul(y))
    }

    /// Streaming iterator over the sphere `{x : |x| = n}`.
    pub fn sphere(&self, n: usize) -> Sphere {
        Sphere::new(self.size(), n)
    }

    /// Number of reduced words of length `n`.
    pub fn sphere_size(&self, n: usize) -> u128 {
        let l = self.size() as u128;
        if n == 0 {
            1
        } else {
            l * (l - 1).pow((n - 1) as u32)
        }
    }
}

/// A reduced word; the empty word is the identity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<Letter>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn letter(a: Letter) -> Self {
        Word(vec![a])
    }

    /// Freely reduces an arbitrary letter sequence.
    pub fn reduce(letters: impl IntoIterator<Item = Letter>) -> Self {
        let mut out: Vec<Letter> = Vec::new();
        for a in letters {
            if out.last() == Some(&inv(a)) {
                out.pop();
            } else {
                out.push(a);
            }
        }
        Word(out)
    }

    /// Wraps letters that are already reduced.
    pub fn from_reduced(letters: Vec<Letter>) -> Self {
        debug_assert!(letters.windows(2).all(|p| p[1] != inv(p[0])));
        Word(letters)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<Letter> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<Letter> {
        self.0.last().copied()
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|&a| inv(a)).collect())
    }

    pub fn mul(&self, other: &Word) -> Word {
        let mut out = self.0.clone();
        for &a in &other.0 {
            if out.last() == Some(&inv(a)) {
                out.pop();
            } else {
                out.push(a);
            }
        }
        Word(out)
    }

    /// `self · a` reduced.
    pub fn mul_letter(&self, a: Letter) -> Word {
        let mut out = self.0.clone();
        if out.last() == Some(&inv(a)) {
            out.pop();
        } else {
            out.push(a);
        }
        Word(out)
    }

    /// Word without its last letter (parent vertex in the tree rooted at e).
    pub fn parent(&self) -> Word {
        let mut v = self.0.clone();
        v.pop();
        Word(v)
    }

    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n.min(self.0.len())].to_vec())
    }

    pub fn starts_with(&self, p: &Word) -> bool {
        self.0.starts_with(&p.0)
    }
}

/// `y ∈ Γ(x)`: the reduced word of `y` starts with `x`.
pub fn in_cone(x: &Word, y: &Word) -> bool {
    y.starts_with(x)
}

/// Tree distance between two vertices.
pub fn distance(x: &Word, y: &Word) -> usize {
    let common = x
        .letters()
        .iter()
        .zip(y.letters())
        .take_while(|(a, b)| a == b)
        .count();
    x.len() + y.len() - 2 * common
}

/// `y ∈ Γ(x, x')` for adjacent `x, x'`: `y` is strictly closer to `x'` than to `x`.
pub fn in_halftree(x: &Word, xa: &Word, y: &Word) -> Result<bool> {
    if distance(x, xa) != 1 {
        return Err(Error::Rejected(format!(
            "vertices at distance {} are not adjacent",
            distance(x, xa)
        )));
    }
    Ok(distance(y, xa) < distance(y, x))
}

/// Depth-first enumeration of reduced words of a fixed length in
/// lexicographic letter order, one word in memory at a time.
#[derive(Clone, Debug)]
pub struct Sphere {
    size: usize,
    n: usize,
    cur: Vec<Letter>,
    done: bool,
}

impl Sphere {
    fn new(size: usize, n: usize) -> Self {
        let mut s = Sphere {
            size,
            n,
            cur: Vec::with_capacity(n),
            done: false,
        };
        for _ in 0..n {
            let next = s.first_allowed(s.cur.last().copied(), 0);
            s.cur.push(next.expect("alphabet has at least 4 letters"));
        }
        s
    }

    fn first_allowed(&self, prev: Option<Letter>, from: Letter) -> Option<Letter> {
        (from..self.size).find(|&c| prev.is_none_or(|p| c != inv(p)))
    }

    fn advance(&mut self) {
        let mut i = self.n;
        loop {
            if i == 0 {
                self.done = true;
                return;
            }
            i -= 1;
            let prev = if i == 0 { None } else { Some(self.cur[i - 1]) };
            if let Some(next) = self.first_allowed(prev, self.cur[i] + 1) {
                self.cur[i] = next;
                for j in i + 1..self.n {
                    let p = Some(self.cur[j - 1]);
                    self.cur[j] = self.first_allowed(p, 0).expect("nonempty");
                }
                return;
            }
        }
    }
}

impl Iterator for Sphere {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        if self.done {
            return None;
        }
        let w = Word(self.cur.clone());
        self.advance();
        Some(w)
    }
}

/// Letter pair `(b, a)` is forbidden in a matrix system when `ba = e`.
#[inline]
pub fn cancels(b: Letter, a: Letter) -> bool {
    b == inv(a)
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}
