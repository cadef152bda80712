//! Deterministic text output: 12-significant-digit numbers and CSV tables
//! with a `#` metadata header.

use std::fmt::Write as _;

/// Formats like C's `%.12g`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..12).contains(&exp) {
        let m = trim_zeros(mantissa);
        format!("{m}e{exp}")
    } else {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Csv,
    Tsv,
}

impl Delimiter {
    fn sep(self) -> char {
        match self {
            Delimiter::Csv => ',',
            Delimiter::Tsv => '\t',
        }
    }
}

/// Builds a delimited table preceded by `# key = value` metadata lines.
pub struct Table {
    delim: Delimiter,
    text: String,
}

impl Table {
    pub fn new(delim: Delimiter) -> Self {
        Table {
            delim,
            text: String::new(),
        }
    }

    pub fn comment(&mut self, line: impl AsRef<str>) -> &mut Self {
        let _ = writeln!(self.text, "# {}", line.as_ref());
        self
    }

    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.text, "# {key} = {value}");
        self
    }

    pub fn header(&mut self, cols: &[&str]) -> &mut Self {
        let sep = self.delim.sep().to_string();
        let _ = writeln!(self.text, "{}", cols.join(&sep));
        self
    }

    pub fn row<I, S>(&mut self, cells: I) -> &mut Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sep = self.delim.sep();
        let mut first = true;
        for c in cells {
            if !first {
                self.text.push(sep);
            }
            first = false;
            self.text.push_str(c.as_ref());
        }
        self.text.push('\n');
        self
    }

    pub fn raw(&mut self, s: &str) -> &mut Self {
        self.text.push_str(s);
        self
    }

    pub fn finish(self) -> String {
        self.text
    }
}
