//! Line-based run configuration: `[section]` headers, one `key = value`
//! per line, `#` comments. Flux components are polynomial strings over an
//! exact coefficient field (rationals and square roots of integers);
//! transcendental symbols are rejected outright.

use std::collections::BTreeMap;
use std::fmt;

use svcl_core::dynamics::{default_grid_size, Scheme, SimConfig};
use svcl_core::exact::ExactScalar;
use svcl_core::field::SpectralField;
use svcl_core::kvec::KVec;
use svcl_core::lattice::{FluxPoly, NoiseSet};

#[derive(Debug, Clone)]
pub struct Diag {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for Diag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, col {}: {}", self.line, self.col, self.msg)
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Parse(Vec<Diag>),
    Validation(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(ds) => {
                for d in ds {
                    writeln!(f, "{d}")?;
                }
                Ok(())
            }
            ConfigError::Validation(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
pub struct SimSettings {
    pub nu: f64,
    pub cutoff: usize,
    pub grid: Option<usize>,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub stream: u64,
    pub blowup: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            nu: 0.1,
            cutoff: 16,
            grid: None,
            dt: 1e-3,
            t_end: 1.0,
            scheme: Scheme::ExpEuler,
            seed: 0,
            stream: 0,
            blowup: 1e6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LatticeSettings {
    pub radius: i32,
    pub margin: Option<i32>,
}

impl Default for LatticeSettings {
    fn default() -> Self {
        LatticeSettings {
            radius: 8,
            margin: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentSettings {
    pub name: String,
    pub ensemble: usize,
    pub burn_in: f64,
    pub params: BTreeMap<String, f64>,
    pub mode_params: BTreeMap<String, KVec>,
}

/// Parsed, validated mirror of everything a run needs.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub flux: Option<FluxPoly>,
    pub flux_sources: Vec<String>,
    pub noise_modes: Vec<(KVec, f64)>,
    pub sim: Option<SimSettings>,
    pub lattice: LatticeSettings,
    pub initial: Vec<(KVec, f64)>,
    pub initial_b: Option<Vec<(KVec, f64)>>,
    pub experiment: Option<ExperimentSettings>,
}

impl RunConfig {
    pub fn noise(&self) -> NoiseSet {
        if self.noise_modes.is_empty() {
            NoiseSet::empty()
        } else {
            NoiseSet::new(self.noise_modes.clone())
        }
    }

    pub fn flux(&self) -> Result<&FluxPoly, ConfigError> {
        self.flux
            .as_ref()
            .ok_or_else(|| ConfigError::Validation("missing [flux] section".into()))
    }

    /// Assemble and validate the integrator configuration.
    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let flux = self.flux()?.clone();
        let sim = self
            .sim
            .as_ref()
            .ok_or_else(|| ConfigError::Validation("missing [sim] section".into()))?;
        let degree = flux.degree().map_or(1, |d| d.max(1));
        let mut cfg = SimConfig::new(
            sim.nu,
            flux,
            self.noise(),
            sim.cutoff,
            sim.dt,
            sim.t_end,
        )
        .with_seed(sim.seed, sim.stream);
        cfg.grid_size = sim.grid.unwrap_or_else(|| default_grid_size(sim.cutoff, degree));
        cfg.scheme = sim.scheme;
        cfg.blowup_threshold = sim.blowup;
        cfg.validate().map_err(ConfigError::Validation)?;
        Ok(cfg)
    }

    pub fn initial_field(&self, cutoff: usize, dim: usize) -> Result<SpectralField, ConfigError> {
        build_field(&self.initial, cutoff, dim)
    }

    pub fn initial_field_b(
        &self,
        cutoff: usize,
        dim: usize,
    ) -> Result<Option<SpectralField>, ConfigError> {
        match &self.initial_b {
            None => Ok(None),
            Some(modes) => Ok(Some(build_field(modes, cutoff, dim)?)),
        }
    }

    pub fn margin_for(&self, flux: &FluxPoly) -> i32 {
        self.lattice
            .margin
            .unwrap_or_else(|| 2 * flux.degree().map_or(1, |d| d) as i32)
    }

    /// Canonical textual form; parsing it back yields the same structure.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        if let Some(flux) = &self.flux {
            out.push_str("[flux]\n");
            out.push_str(&format!("d = {}\n", flux.dim()));
            for (i, src) in self.flux_sources.iter().enumerate() {
                out.push_str(&format!("A{} = \"{}\"\n", i + 1, src));
            }
            out.push('\n');
        }
        if !self.noise_modes.is_empty() {
            out.push_str("[noise]\n");
            let modes: Vec<String> = self.noise_modes.iter().map(|(k, _)| k.to_string()).collect();
            out.push_str(&format!("modes = [{}]\n", modes.join(", ")));
            let amps: Vec<String> = self
                .noise_modes
                .iter()
                .map(|(_, b)| format!("{b}"))
                .collect();
            out.push_str(&format!("amps = [{}]\n\n", amps.join(", ")));
        }
        if let Some(sim) = &self.sim {
            out.push_str("[sim]\n");
            out.push_str(&format!("nu = {}\n", sim.nu));
            out.push_str(&format!("cutoff = {}\n", sim.cutoff));
            if let Some(g) = sim.grid {
                out.push_str(&format!("grid = {g}\n"));
            }
            out.push_str(&format!("dt = {}\n", sim.dt));
            out.push_str(&format!("t_end = {}\n", sim.t_end));
            out.push_str(&format!(
                "scheme = {}\n",
                match sim.scheme {
                    Scheme::ExpEuler => "exp_euler",
                    Scheme::SemiImplicitEuler => "semi_implicit_euler",
                }
            ));
            out.push_str(&format!("seed = {}\n", sim.seed));
            out.push_str(&format!("stream = {}\n", sim.stream));
            out.push_str(&format!("blowup = {}\n\n", sim.blowup));
        }
        out.push_str("[lattice]\n");
        out.push_str(&format!("radius = {}\n", self.lattice.radius));
        if let Some(m) = self.lattice.margin {
            out.push_str(&format!("margin = {m}\n"));
        }
        out.push('\n');
        if !self.initial.is_empty() || self.initial_b.is_some() {
            out.push_str("[initial]\n");
            if !self.initial.is_empty() {
                out.push_str(&format!("u0 = [{}]\n", emit_field_modes(&self.initial)));
            }
            if let Some(b) = &self.initial_b {
                out.push_str(&format!("u0b = [{}]\n", emit_field_modes(b)));
            }
            out.push('\n');
        }
        if let Some(exp) = &self.experiment {
            out.push_str("[experiment]\n");
            out.push_str(&format!("name = {}\n", exp.name));
            out.push_str(&format!("ensemble = {}\n", exp.ensemble));
            out.push_str(&format!("burn_in = {}\n", exp.burn_in));
            for (k, v) in &exp.params {
                out.push_str(&format!("{k} = {v}\n"));
            }
            for (k, v) in &exp.mode_params {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

fn emit_field_modes(modes: &[(KVec, f64)]) -> String {
    modes
        .iter()
        .map(|(k, v)| format!("({k}, {v})"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn build_field(
    modes: &[(KVec, f64)],
    cutoff: usize,
    dim: usize,
) -> Result<SpectralField, ConfigError> {
    let mut f = SpectralField::zeros(dim, cutoff);
    for (k, v) in modes {
        if k.dim() != dim {
            return Err(ConfigError::Validation(format!(
                "initial mode {k} has dimension {} but the flux lives in dimension {dim}",
                k.dim()
            )));
        }
        if k.is_zero() || k.max_norm() as usize > cutoff {
            return Err(ConfigError::Validation(format!(
                "initial mode {k} is outside the tracked box (cutoff {cutoff})"
            )));
        }
        f.set(k, *v);
    }
    Ok(f)
}

// ---------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
    line: usize,
    col0: usize,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str, line: usize, col0: usize) -> Self {
        Cursor {
            s: s.as_bytes(),
            pos: 0,
            line,
            col0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Diag {
        Diag {
            line: self.line,
            col: self.col0 + self.pos + 1,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.s.get(self.pos).map(|&b| b as char)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), Diag> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn uint(&mut self) -> Result<u64, Diag> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected an integer"));
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| self.err("integer out of range"))
    }

    fn int(&mut self) -> Result<i64, Diag> {
        let neg = self.eat('-');
        let v = self.uint()? as i64;
        Ok(if neg { -v } else { v })
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len()
            && ((self.s[self.pos] as char).is_ascii_alphanumeric() || self.s[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            None
        } else {
            Some(String::from_utf8_lossy(&self.s[start..self.pos]).into_owned())
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.s.len()
    }
}

/// Exact coefficient expression: products and parenthesized sums of
/// integers, fractions, and `sqrt(n)`.
fn parse_coeff_factor(c: &mut Cursor) -> Result<ExactScalar, Diag> {
    if c.eat('(') {
        let v = parse_coeff_sum(c)?;
        c.expect(')')?;
        return Ok(v);
    }
    match c.peek() {
        Some(d) if d.is_ascii_digit() => {
            let num = c.uint()? as i64;
            if c.eat('/') {
                let den = c.uint()? as i64;
                if den == 0 {
                    return Err(c.err("zero denominator"));
                }
                Ok(ExactScalar::from_ratio(num, den))
            } else {
                Ok(ExactScalar::from_int(num))
            }
        }
        _ => {
            let save = c.pos;
            match c.ident().as_deref() {
                Some("sqrt") => {
                    c.expect('(')?;
                    let n = c.uint()?;
                    if n == 0 {
                        return Err(c.err("sqrt of zero is not a useful coefficient"));
                    }
                    c.expect(')')?;
                    Ok(ExactScalar::sqrt(n))
                }
                Some(other) => {
                    c.pos = save;
                    Err(c.err(format!(
                        "unknown symbol '{other}': coefficients are rationals and \
                         square roots of integers (transcendental constants are rejected)"
                    )))
                }
                None => Err(c.err("expected a coefficient")),
            }
        }
    }
}

fn parse_coeff_term(c: &mut Cursor) -> Result<ExactScalar, Diag> {
    let mut acc = parse_coeff_factor(c)?;
    while c.eat('*') {
        // A trailing '*u' belongs to the polynomial, not the coefficient.
        let save = c.pos;
        if let Some('u') = c.peek() {
            c.pos = save;
            break;
        }
        acc = acc.mul(&parse_coeff_factor(c)?);
    }
    Ok(acc)
}

fn parse_coeff_sum(c: &mut Cursor) -> Result<ExactScalar, Diag> {
    let mut acc = parse_coeff_term(c)?;
    loop {
        if c.eat('+') {
            acc = acc.add(&parse_coeff_term(c)?);
        } else if c.eat('-') {
            acc = acc.sub(&parse_coeff_term(c)?);
        } else {
            return Ok(acc);
        }
    }
}

/// One flux component `sum_j coeff_j u^j`, returned as a dense
/// coefficient row indexed by power.
pub fn parse_polynomial(src: &str, line: usize, col0: usize) -> Result<Vec<ExactScalar>, Diag> {
    let mut c = Cursor::new(src, line, col0);
    let mut coeffs: Vec<ExactScalar> = Vec::new();
    let add_term = |coeffs: &mut Vec<ExactScalar>, power: usize, v: ExactScalar| {
        if coeffs.len() <= power {
            coeffs.resize(power + 1, ExactScalar::zero());
        }
        coeffs[power] = coeffs[power].add(&v);
    };
    let mut first = true;
    loop {
        if c.at_end() {
            if first {
                return Err(c.err("empty polynomial"));
            }
            return Ok(coeffs);
        }
        let negate = if first {
            c.eat('-')
        } else if c.eat('+') {
            false
        } else if c.eat('-') {
            true
        } else {
            return Err(c.err("expected '+' or '-' between polynomial terms"));
        };
        first = false;
        // Either "coeff", "coeff u^j", "coeff * u^j", or bare "u^j".
        let coeff = match c.peek() {
            Some('u') => ExactScalar::from_int(1),
            _ => {
                let v = parse_coeff_term(&mut c)?;
                c.eat('*');
                v
            }
        };
        let coeff = if negate { coeff.negate() } else { coeff };
        if c.eat('u') {
            let power = if c.eat('^') { c.uint()? as usize } else { 1 };
            add_term(&mut coeffs, power, coeff);
        } else {
            add_term(&mut coeffs, 0, coeff);
        }
    }
}

fn parse_kvec(c: &mut Cursor) -> Result<KVec, Diag> {
    c.expect('(')?;
    let mut coords = vec![c.int()? as i32];
    while c.eat(',') {
        coords.push(c.int()? as i32);
    }
    c.expect(')')?;
    Ok(KVec::new(coords))
}

fn parse_kvec_list(src: &str, line: usize, col0: usize) -> Result<Vec<KVec>, Diag> {
    let mut c = Cursor::new(src, line, col0);
    c.expect('[')?;
    let mut out = Vec::new();
    if !c.eat(']') {
        loop {
            out.push(parse_kvec(&mut c)?);
            if c.eat(']') {
                break;
            }
            c.expect(',')?;
        }
    }
    if !c.at_end() {
        return Err(c.err("trailing input after list"));
    }
    Ok(out)
}

fn parse_float(c: &mut Cursor) -> Result<f64, Diag> {
    c.skip_ws();
    let start = c.pos;
    while c.pos < c.s.len() {
        let ch = c.s[c.pos] as char;
        if ch.is_ascii_digit() || "+-.eE".contains(ch) {
            c.pos += 1;
        } else {
            break;
        }
    }
    std::str::from_utf8(&c.s[start..c.pos])
        .unwrap()
        .parse()
        .map_err(|_| c.err("expected a number"))
}

fn parse_float_list(src: &str, line: usize, col0: usize) -> Result<Vec<f64>, Diag> {
    let mut c = Cursor::new(src, line, col0);
    c.expect('[')?;
    let mut out = Vec::new();
    if !c.eat(']') {
        loop {
            out.push(parse_float(&mut c)?);
            if c.eat(']') {
                break;
            }
            c.expect(',')?;
        }
    }
    Ok(out)
}

fn parse_mode_value_list(src: &str, line: usize, col0: usize) -> Result<Vec<(KVec, f64)>, Diag> {
    let mut c = Cursor::new(src, line, col0);
    c.expect('[')?;
    let mut out = Vec::new();
    if !c.eat(']') {
        loop {
            c.expect('(')?;
            let k = parse_kvec(&mut c)?;
            c.expect(',')?;
            let v = parse_float(&mut c)?;
            c.expect(')')?;
            out.push((k, v));
            if c.eat(']') {
                break;
            }
            c.expect(',')?;
        }
    }
    Ok(out)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut diags = Vec::new();
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    let mut flux_dim: Option<usize> = None;
    let mut flux_rows: BTreeMap<usize, (Vec<ExactScalar>, String)> = BTreeMap::new();
    let mut noise_vecs: Vec<KVec> = Vec::new();
    let mut noise_amps: Vec<f64> = Vec::new();
    let mut noise_amp_uniform: Option<f64> = None;
    let mut sim = SimSettings::default();
    let mut saw_sim = false;
    let mut exp = ExperimentSettings::default();
    let mut saw_exp = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line_num = lineno + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) => {
                    section = name.trim().to_string();
                    if !["flux", "noise", "sim", "lattice", "initial", "experiment"]
                        .contains(&section.as_str())
                    {
                        diags.push(Diag {
                            line: line_num,
                            col: 1,
                            msg: format!("unknown section '[{section}]'"),
                        });
                    }
                }
                None => diags.push(Diag {
                    line: line_num,
                    col: trimmed.len(),
                    msg: "unterminated section header".into(),
                }),
            }
            continue;
        }
        let Some(eq) = line.find('=') else {
            diags.push(Diag {
                line: line_num,
                col: 1,
                msg: "expected 'key = value'".into(),
            });
            continue;
        };
        let key = line[..eq].trim().to_string();
        let val_col = eq + 1;
        let mut val = line[eq + 1..].trim().to_string();
        // Strip one layer of quotes.
        if val.len() >= 2 && val.starts_with('"') && val.ends_with('"') {
            val = val[1..val.len() - 1].to_string();
        }
        let vcol = val_col + 1;

        macro_rules! num {
            ($ty:ty) => {
                match val.parse::<$ty>() {
                    Ok(v) => Some(v),
                    Err(_) => {
                        diags.push(Diag {
                            line: line_num,
                            col: vcol,
                            msg: format!("cannot parse '{val}' as a number"),
                        });
                        None
                    }
                }
            };
        }

        match (section.as_str(), key.as_str()) {
            ("flux", "d") => {
                flux_dim = num!(usize);
            }
            ("flux", k) if k.starts_with('A') => match k[1..].parse::<usize>() {
                Ok(i) if i >= 1 => match parse_polynomial(&val, line_num, vcol) {
                    Ok(row) => {
                        flux_rows.insert(i - 1, (row, val.clone()));
                    }
                    Err(d) => diags.push(d),
                },
                _ => diags.push(Diag {
                    line: line_num,
                    col: 1,
                    msg: format!("flux components are A1..Ad, got '{k}'"),
                }),
            },
            ("noise", "modes") => match parse_kvec_list(&val, line_num, vcol) {
                Ok(ks) => noise_vecs = ks,
                Err(d) => diags.push(d),
            },
            ("noise", "amps") => match parse_float_list(&val, line_num, vcol) {
                Ok(a) => noise_amps = a,
                Err(d) => diags.push(d),
            },
            ("noise", "amp") => {
                noise_amp_uniform = num!(f64);
            }
            ("sim", "nu") => {
                if let Some(v) = num!(f64) {
                    sim.nu = v;
                }
                saw_sim = true;
            }
            ("sim", "cutoff") => {
                if let Some(v) = num!(usize) {
                    sim.cutoff = v;
                }
                saw_sim = true;
            }
            ("sim", "grid") => {
                sim.grid = num!(usize);
                saw_sim = true;
            }
            ("sim", "dt") => {
                if let Some(v) = num!(f64) {
                    sim.dt = v;
                }
                saw_sim = true;
            }
            ("sim", "t_end") => {
                if let Some(v) = num!(f64) {
                    sim.t_end = v;
                }
                saw_sim = true;
            }
            ("sim", "scheme") => {
                saw_sim = true;
                sim.scheme = match val.as_str() {
                    "exp_euler" => Scheme::ExpEuler,
                    "semi_implicit_euler" => Scheme::SemiImplicitEuler,
                    other => {
                        diags.push(Diag {
                            line: line_num,
                            col: vcol,
                            msg: format!(
                                "unknown scheme '{other}' (exp_euler, semi_implicit_euler)"
                            ),
                        });
                        Scheme::ExpEuler
                    }
                };
            }
            ("sim", "seed") => {
                if let Some(v) = num!(u64) {
                    sim.seed = v;
                }
                saw_sim = true;
            }
            ("sim", "stream") => {
                if let Some(v) = num!(u64) {
                    sim.stream = v;
                }
                saw_sim = true;
            }
            ("sim", "blowup") => {
                if let Some(v) = num!(f64) {
                    sim.blowup = v;
                }
                saw_sim = true;
            }
            ("lattice", "radius") => {
                if let Some(v) = num!(i32) {
                    cfg.lattice.radius = v;
                }
            }
            ("lattice", "margin") => {
                cfg.lattice.margin = num!(i32);
            }
            ("initial", "u0") => match parse_mode_value_list(&val, line_num, vcol) {
                Ok(m) => cfg.initial = m,
                Err(d) => diags.push(d),
            },
            ("initial", "u0b") => match parse_mode_value_list(&val, line_num, vcol) {
                Ok(m) => cfg.initial_b = Some(m),
                Err(d) => diags.push(d),
            },
            ("experiment", "name") => {
                exp.name = val.clone();
                saw_exp = true;
            }
            ("experiment", "ensemble") => {
                if let Some(v) = num!(usize) {
                    exp.ensemble = v;
                }
                saw_exp = true;
            }
            ("experiment", "burn_in") => {
                if let Some(v) = num!(f64) {
                    exp.burn_in = v;
                }
                saw_exp = true;
            }
            ("experiment", k) if k.ends_with("_mode") => {
                let mut c = Cursor::new(&val, line_num, vcol);
                match parse_kvec(&mut c) {
                    Ok(kv) => {
                        exp.mode_params.insert(k.to_string(), kv);
                    }
                    Err(d) => diags.push(d),
                }
                saw_exp = true;
            }
            ("experiment", k) => {
                if let Some(v) = num!(f64) {
                    exp.params.insert(k.to_string(), v);
                }
                saw_exp = true;
            }
            ("", _) => diags.push(Diag {
                line: line_num,
                col: 1,
                msg: "key outside any section".into(),
            }),
            (s, k) => diags.push(Diag {
                line: line_num,
                col: 1,
                msg: format!("unknown key '{k}' in section '[{s}]'"),
            }),
        }
    }

    // Assemble the flux.
    if let Some(d) = flux_dim {
        if d == 0 {
            diags.push(Diag {
                line: 0,
                col: 0,
                msg: "flux dimension must be at least 1".into(),
            });
        } else {
            let mut rows = Vec::new();
            let mut sources = Vec::new();
            for i in 0..d {
                match flux_rows.remove(&i) {
                    Some((row, src)) => {
                        rows.push(row);
                        sources.push(src);
                    }
                    None => diags.push(Diag {
                        line: 0,
                        col: 0,
                        msg: format!("missing flux component A{}", i + 1),
                    }),
                }
            }
            if !flux_rows.is_empty() {
                diags.push(Diag {
                    line: 0,
                    col: 0,
                    msg: format!("flux has components beyond A{d}"),
                });
            }
            if rows.len() == d {
                cfg.flux = Some(FluxPoly::new(d, rows));
                cfg.flux_sources = sources;
            }
        }
    } else if !flux_rows.is_empty() {
        diags.push(Diag {
            line: 0,
            col: 0,
            msg: "flux components given without 'd = <dim>'".into(),
        });
    }

    // Assemble the noise.
    if !noise_vecs.is_empty() {
        let amps = if let Some(b) = noise_amp_uniform {
            vec![b; noise_vecs.len()]
        } else {
            noise_amps.clone()
        };
        if amps.len() != noise_vecs.len() {
            diags.push(Diag {
                line: 0,
                col: 0,
                msg: format!(
                    "noise has {} modes but {} amplitudes",
                    noise_vecs.len(),
                    amps.len()
                ),
            });
        } else {
            cfg.noise_modes = noise_vecs.into_iter().zip(amps).collect();
        }
    }

    if saw_sim {
        cfg.sim = Some(sim);
    }
    if saw_exp {
        if exp.ensemble == 0 {
            exp.ensemble = 1;
        }
        cfg.experiment = Some(exp);
    }

    if !diags.is_empty() {
        return Err(ConfigError::Parse(diags));
    }

    // Structural validation beyond grammar.
    if !cfg.noise_modes.is_empty() {
        let mut seen = std::collections::BTreeSet::new();
        for (k, b) in &cfg.noise_modes {
            if k.is_zero() {
                return Err(ConfigError::Validation(
                    "the zero mode cannot be forced".into(),
                ));
            }
            if *b == 0.0 {
                return Err(ConfigError::Validation(format!(
                    "amplitude on {k} must be nonzero"
                )));
            }
            seen.insert(k.clone());
        }
        for k in &seen {
            if !seen.contains(&k.neg()) {
                return Err(ConfigError::Validation(format!(
                    "forced set must be symmetric; missing {}",
                    k.neg()
                )));
            }
        }
        if let Some(flux) = &cfg.flux {
            for (k, _) in &cfg.noise_modes {
                if k.dim() != flux.dim() {
                    return Err(ConfigError::Validation(format!(
                        "forced mode {k} does not match flux dimension {}",
                        flux.dim()
                    )));
                }
            }
        }
    }
    if let Some(flux) = &cfg.flux {
        if cfg.lattice.radius < cfg.noise().max_norm() {
            return Err(ConfigError::Validation(
                "lattice radius must cover the forced set".into(),
            ));
        }
        let _ = flux;
    }
    Ok(cfg)
}
