//! Population traces and their CSV representation.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::heom::BathSpec;
use crate::noisegen::{Layout, NoiseModel, SequenceKind};
use crate::qsim::Counts;

pub const CSV_HEADER: &str = "step,time_fs,theta,P1,P2,leak_frac,N00,N01,N10,N11";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Circuit,
    Heom,
    Oracle,
    /// Read back from a file without its run metadata.
    External,
}

/// Where a trace came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine: Engine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_cm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bath: Option<BathSpec>,
    /// Total dissipation blocks `N_I` over the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub insertions: Option<u64>,
}

impl Provenance {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine,
            d: None,
            lambda_cm: None,
            seed: None,
            shots: None,
            sequence: None,
            layout: None,
            noise: None,
            bath: None,
            insertions: None,
        }
    }
}

/// Site populations on a time grid. Row `i` holds the populations at
/// `times_fs[i]`; for dimers `P1`/`P2` are columns 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTrace {
    pub steps: Vec<usize>,
    pub times_fs: Vec<f64>,
    pub thetas: Vec<f64>,
    pub populations: Vec<Vec<f64>>,
    /// Measured weight outside the one-exciton manifold.
    pub leak_frac: Vec<f64>,
    pub counts: Vec<Option<Counts>>,
    pub provenance: Provenance,
}

impl PopulationTrace {
    pub fn len(&self) -> usize {
        self.times_fs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_fs.is_empty()
    }

    pub fn n_sites(&self) -> usize {
        self.populations.first().map_or(0, Vec::len)
    }

    pub fn site(&self, i: usize) -> Vec<f64> {
        self.populations.iter().map(|row| row[i]).collect()
    }

    pub fn p1(&self) -> Vec<f64> {
        self.site(0)
    }

    pub fn p2(&self) -> Vec<f64> {
        self.site(1)
    }

    pub fn times_ps(&self) -> Vec<f64> {
        self.times_fs.iter().map(|t| t * 1e-3).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times_fs.len();
        if self.steps.len() != n
            || self.thetas.len() != n
            || self.populations.len() != n
            || self.leak_frac.len() != n
            || self.counts.len() != n
        {
            return Err(Error::Format("trace columns have different lengths".into()));
        }
        if self.times_fs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Format("times are not strictly increasing".into()));
        }
        for (i, row) in self.populations.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Format(format!(
                    "populations at row {i} sum to {sum}"
                )));
            }
        }
        Ok(())
    }

    /// Root-mean-square difference in `P1` over a shared time grid.
    pub fn rms_p1(&self, other: &PopulationTrace) -> Result<f64> {
        if self.len() != other.len()
            || self
                .times_fs
                .iter()
                .zip(&other.times_fs)
                .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::Parameter(
                "traces are on different time grids".into(),
            ));
        }
        Ok(rms_diff(&self.p1(), &other.p1()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if self.n_sites() != 2 {
            return Err(Error::Format(format!(
                "the CSV schema holds dimer traces only, this one has {} sites",
                self.n_sites()
            )));
        }
        writeln!(w, "{CSV_HEADER}")?;
        for i in 0..self.len() {
            let counts = match &self.counts[i] {
                Some(c) => format!("{},{},{},{}", c.n00(), c.n01(), c.n10(), c.n11()),
                None => ",,,".to_string(),
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.steps[i],
                format_sig(self.times_fs[i]),
                format_sig(self.thetas[i]),
                format_sig(self.populations[i][0]),
                format_sig(self.populations[i][1]),
                format_sig(self.leak_frac[i]),
                counts
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is ASCII"))
    }

    /// Parses the CSV schema back. Provenance is not stored in the file and
    /// comes back as [`Engine::External`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty file".into()))??;
        if header.trim_end() != CSV_HEADER {
            return Err(Error::Format(format!("unexpected header {header:?}")));
        }
        let mut t = PopulationTrace {
            steps: Vec::new(),
            times_fs: Vec::new(),
            thetas: Vec::new(),
            populations: Vec::new(),
            leak_frac: Vec::new(),
            counts: Vec::new(),
            provenance: Provenance::new(Engine::External),
        };
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = lineno + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(Error::Format(format!(
                    "line {row}: expected 10 fields, got {}",
                    f.len()
                )));
            }
            let num = |s: &str, name: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {row}: bad {name} {s:?}")))
            };
            t.steps.push(
                f[0].parse()
                    .map_err(|_| Error::Format(format!("line {row}: bad step {:?}", f[0])))?,
            );
            t.times_fs.push(num(f[1], "time_fs")?);
            t.thetas.push(num(f[2], "theta")?);
            t.populations.push(vec![num(f[3], "P1")?, num(f[4], "P2")?]);
            t.leak_frac.push(if f[5].is_empty() {
                0.0
            } else {
                num(f[5], "leak_frac")?
            });
            t.counts.push(if f[6..].iter().all(|s| s.is_empty()) {
                None
            } else {
                let mut n = [0u64; 4];
                for (k, s) in f[6..].iter().enumerate() {
                    n[k] = s
                        .parse()
                        .map_err(|_| Error::Format(format!("line {row}: bad count {s:?}")))?;
                }
                Some(Counts::from_two_qubit(n[0], n[1], n[2], n[3]))
            });
        }
        Ok(t)
    }
}

pub fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64).sqrt()
}

/// `%.12g`-style formatting: 12 significant digits, trailing zeros dropped,
/// scientific notation outside `1e-5 ≤ |x| < 1e12`.
pub fn format_sig(x: f64) -> String {
    const SIG: usize = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", SIG - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= SIG as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (SIG as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(-0.0), "0");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(2.0), "2");
        assert_eq!(format_sig(0.345_466_123_456_789), "0.345466123457");
        assert_eq!(format_sig(300.0), "300");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_sig(1.5e-7), "1.5e-7");
        assert_eq!(format_sig(-2.5e13), "-2.5e13");
        assert_eq!(format_sig(0.000_12), "0.00012");
    }

    fn sample() -> PopulationTrace {
        PopulationTrace {
            steps: vec![0, 1],
            times_fs: vec![0.0, 2.0],
            thetas: vec![0.0, 0.03767],
            populations: vec![vec![1.0, 0.0], vec![0.75, 0.25]],
            leak_frac: vec![0.0, 0.512],
            counts: vec![None, Some(Counts::from_two_qubit(4192, 3000, 1000, 0))],
            provenance: Provenance::new(Engine::Circuit),
        }
    }

    #[test]
    fn csv_layout() {
        let s = sample().to_csv_string().unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "0,0,0,1,0,0,,,,");
        assert_eq!(lines[2], "1,2,0.03767,0.75,0.25,0.512,4192,3000,1000,0");
        assert!(!s.contains('\r'));
    }

    #[test]
    fn csv_read_back() {
        let t = sample();
        let back = PopulationTrace::read_csv(t.to_csv_string().unwrap().as_bytes()).unwrap();
        assert_eq!(back.populations, t.populations);
        assert_eq!(back.counts, t.counts);
        assert_eq!(back.provenance.engine, Engine::External);
    }

    #[test]
    fn csv_rejects_foreign_header() {
        assert!(PopulationTrace::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn validation() {
        let mut t = sample();
        t.validate().unwrap();
        t.times_fs[1] = 0.0;
        assert!(t.validate().is_err());
        let mut t = sample();
        t.populations[1] = vec![0.7, 0.2];
        assert!(t.validate().is_err());
    }

    #[test]
    fn rms_requires_same_grid() {
        let a = sample();
        let mut b = sample();
        assert_eq!(a.rms_p1(&b).unwrap(), 0.0);
        b.times_fs[1] = 3.0;
        assert!(a.rms_p1(&b).is_err());
    }
}
