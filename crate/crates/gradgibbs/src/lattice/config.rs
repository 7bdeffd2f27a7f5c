use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

use super::{LatticeDomain, Topology};

/// A microscopic configuration: one `R^m` vector per site.
///
/// Configurations are plain values; workers clone and mutate their own copies.
/// The optional pin marks the canonical representative of the shift quotient
/// (the pinned site is held at zero and never proposed by samplers).
#[derive(Debug, Clone)]
pub struct Configuration {
    dom: Arc<LatticeDomain>,
    values: Vec<f64>,
    pin: Option<usize>,
}

impl Configuration {
    pub fn zeros(dom: &Arc<LatticeDomain>) -> Self {
        Configuration {
            dom: Arc::clone(dom),
            values: vec![0.0; dom.n_sites() * dom.m()],
            pin: None,
        }
    }

    pub fn from_values(dom: &Arc<LatticeDomain>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), dom.n_sites() * dom.m());
        Configuration {
            dom: Arc::clone(dom),
            values,
            pin: None,
        }
    }

    /// Pin the lexicographically smallest site to zero, producing the
    /// canonical representative of the configuration modulo global shifts.
    pub fn with_quotient_pin(mut self) -> Self {
        let m = self.dom.m();
        let base: Vec<f64> = self.values[0..m].to_vec();
        for i in 0..self.dom.n_sites() {
            for alpha in 0..m {
                self.values[i * m + alpha] -= base[alpha];
            }
        }
        self.pin = Some(0);
        self
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.dom
    }

    pub fn pin(&self) -> Option<usize> {
        self.pin
    }

    pub fn set_pin(&mut self, pin: Option<usize>) {
        self.pin = pin;
    }

    pub fn values(&self, site: usize) -> &[f64] {
        let m = self.dom.m();
        &self.values[site * m..(site + 1) * m]
    }

    pub fn values_mut(&mut self, site: usize) -> &mut [f64] {
        let m = self.dom.m();
        &mut self.values[site * m..(site + 1) * m]
    }

    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Discrete forward gradient `X(i + e_k) - X(i)`, defined when both sites
    /// lie in the domain. On torus domains the bond always exists but carries
    /// no twist here; twisted energies are assembled by the Hamiltonian.
    pub fn grad(&self, site: usize, axis: usize, out: &mut [f64]) -> bool {
        match self.dom.neighbor(site, axis, 1) {
            Some((j, _)) => {
                let m = self.dom.m();
                let a = self.values(site);
                let b = self.values(j);
                for alpha in 0..m {
                    out[alpha] = b[alpha] - a[alpha];
                }
                m > 0
            }
            None => false,
        }
    }

    /// `sum_k |grad_k X(i)|^p` over the axes where the gradient exists.
    pub fn grad_p_norm(&self, site: usize, p: f64) -> f64 {
        let m = self.dom.m();
        let mut buf = [0.0f64; 2];
        let mut total = 0.0;
        for k in 0..self.dom.d() {
            if self.grad(site, k, &mut buf[..m]) {
                let sq: f64 = buf[..m].iter().map(|v| v * v).sum();
                total += sq.sqrt().powf(p);
            }
        }
        total
    }

    /// Serialize to the line-oriented snapshot format:
    /// a header line `d m eps lo.. hi..`, then one site per line
    /// `i_1 .. i_d | x_1 .. x_m` with 17-significant-digit decimals.
    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        let dom = &self.dom;
        let shape = dom.shape();
        write!(w, "{} {} {:.16e}", dom.d(), dom.m(), dom.eps())?;
        for k in 0..dom.d() {
            write!(w, " {:.16e} {:.16e}", shape.lo[k], shape.hi[k])?;
        }
        writeln!(
            w,
            " {}",
            match dom.topology() {
                Topology::Box => "box",
                Topology::Torus => "torus",
            }
        )?;
        for i in 0..dom.n_sites() {
            let c = dom.coords(i);
            for (k, ck) in c.iter().enumerate() {
                if k > 0 {
                    write!(w, " ")?;
                }
                write!(w, "{ck}")?;
            }
            write!(w, " |")?;
            for v in self.values(i) {
                write!(w, " {v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: &mut R) -> Result<Configuration> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() < 4 {
            return Err(Error::Parse("snapshot header too short".into()));
        }
        let d: usize = toks[0].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let m: usize = toks[1].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        let eps: f64 = toks[2].parse().map_err(|e| Error::Parse(format!("{e}")))?;
        if toks.len() != 3 + 2 * d + 1 {
            return Err(Error::Parse("snapshot header field count mismatch".into()));
        }
        let mut lo = Vec::with_capacity(d);
        let mut hi = Vec::with_capacity(d);
        for k in 0..d {
            lo.push(
                toks[3 + 2 * k]
                    .parse()
                    .map_err(|e| Error::Parse(format!("{e}")))?,
            );
            hi.push(
                toks[4 + 2 * k]
                    .parse()
                    .map_err(|e| Error::Parse(format!("{e}")))?,
            );
        }
        let dom = match *toks.last().unwrap() {
            "box" => LatticeDomain::build(super::BoxShape::new(lo, hi), eps, m)?,
            "torus" => LatticeDomain::build_torus(d, eps, m)?,
            other => return Err(Error::Parse(format!("unknown topology '{other}'"))),
        };
        let mut cfg = Configuration::zeros(&dom);
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (c_part, v_part) = line
                .split_once('|')
                .ok_or_else(|| Error::Parse(format!("site line missing '|': {line}")))?;
            let coords: Vec<i64> = c_part
                .split_whitespace()
                .map(|t| t.parse().map_err(|e| Error::Parse(format!("{e}"))))
                .collect::<Result<_>>()?;
            let idx = dom
                .site_index(&coords)
                .ok_or(Error::SiteOutsideDomain { site: coords })?;
            let vals: Vec<f64> = v_part
                .split_whitespace()
                .map(|t| t.parse().map_err(|e| Error::Parse(format!("{e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != m {
                return Err(Error::Parse(format!(
                    "site line has {} values, expected {m}",
                    vals.len()
                )));
            }
            cfg.values_mut(idx).copy_from_slice(&vals);
        }
        Ok(cfg)
    }
}
