//! JSON form of the annotation text format. Each record carries the same
//! words and numbers as one text line, under named fields:
//!
//! ```text
//! line free x0 y0 x1 y1            {"record":"line","kind":"free","x0":..,"y0":..,"x1":..,"y1":..}
//! line pos x0 y0 x1 y1 tx0 ty0 tx1 ty1
//! region move x0 y0 x1 y1 dx dy    {"record":"region","kind":"move",...,"dx":..,"dy":..}
//! region scale x0 y0 x1 y1 s
//! ```

use std::fmt::Write as _;

use patchmatch::synthesis::Annotations;
use patchmatch::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub record: String,
    pub kind: String,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ty0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ty1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

impl Record {
    /// Names of the optional fields a record of this kind carries.
    fn extras(&self) -> Result<&'static [&'static str]> {
        Ok(match (self.record.as_str(), self.kind.as_str()) {
            ("line", "free" | "slope") | ("region", "translate") => &[],
            ("line", "pos") => &["tx0", "ty0", "tx1", "ty1"],
            ("region", "move") => &["dx", "dy"],
            ("region", "scale") => &["s"],
            (r, k) => return Err(Error::Format(format!("unknown annotation record {r:?} of kind {k:?}"))),
        })
    }

    fn field(&self, name: &str) -> Option<f64> {
        match name {
            "tx0" => self.tx0,
            "ty0" => self.ty0,
            "tx1" => self.tx1,
            "ty1" => self.ty1,
            "dx" => self.dx,
            "dy" => self.dy,
            "s" => self.s,
            _ => None,
        }
    }

    fn set(&mut self, name: &str, v: f64) {
        let slot = match name {
            "tx0" => &mut self.tx0,
            "ty0" => &mut self.ty0,
            "tx1" => &mut self.tx1,
            "ty1" => &mut self.ty1,
            "dx" => &mut self.dx,
            "dy" => &mut self.dy,
            _ => &mut self.s,
        };
        *slot = Some(v);
    }

    /// The equivalent annotation text line.
    pub fn to_line(&self) -> Result<String> {
        let extras = self.extras()?;
        let present = ["tx0", "ty0", "tx1", "ty1", "dx", "dy", "s"]
            .into_iter()
            .filter(|n| self.field(n).is_some());
        if let Some(stray) = present.clone().find(|n| !extras.contains(n)) {
            return Err(Error::Format(format!(
                "{} {} does not take {stray:?}",
                self.record, self.kind
            )));
        }
        let mut line = format!(
            "{} {} {} {} {} {}",
            self.record, self.kind, self.x0, self.y0, self.x1, self.y1
        );
        for n in extras {
            let v = self
                .field(n)
                .ok_or_else(|| Error::Format(format!("{} {} needs {n:?}", self.record, self.kind)))?;
            let _ = write!(line, " {v}");
        }
        Ok(line)
    }

    fn from_line(line: &str) -> Result<Record> {
        let words: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Format(format!("unexpected annotation line {line:?}"));
        if words.len() < 6 {
            return Err(bad());
        }
        let num = |w: &str| w.parse::<f64>().map_err(|_| bad());
        let mut r = Record {
            record: words[0].into(),
            kind: words[1].into(),
            x0: num(words[2])?,
            y0: num(words[3])?,
            x1: num(words[4])?,
            y1: num(words[5])?,
            tx0: None,
            ty0: None,
            tx1: None,
            ty1: None,
            dx: None,
            dy: None,
            s: None,
        };
        let extras = r.extras()?;
        if words.len() != 6 + extras.len() {
            return Err(bad());
        }
        for (n, w) in extras.iter().zip(&words[6..]) {
            r.set(n, num(w)?);
        }
        Ok(r)
    }
}

pub fn to_annotations(records: &[Record]) -> Result<Annotations> {
    let mut text = String::new();
    for r in records {
        text.push_str(&r.to_line()?);
        text.push('\n');
    }
    Annotations::parse(&text)
}

pub fn from_annotations(a: &Annotations) -> Vec<Record> {
    a.to_text()
        .lines()
        .map(|l| Record::from_line(l).expect("annotation text is well formed"))
        .collect()
}
