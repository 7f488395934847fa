//! Plain-text lattice format.
//!
//! ```text
//! abwalk-lattice 1
//! dim <d>
//! epsilon <eps>
//! time_scale <name>
//! sites <n>
//! edges <m>
//! site <index> <k_1> .. <k_d> <boundary 0|1> <h>
//! ...
//! edge <x> <y> <p_xy>
//! ...
//! ```
//!
//! Reals are written with 17 significant digits so export/import is bit-exact.
//! Edges are grouped by source site in ascending order.

use std::io::{BufRead, Write};

use super::{Lattice, TimeScale};
use crate::error::{Error, Result};
use crate::scalar::{fmt17, Scalar};

const MAGIC: &str = "abwalk-lattice 1";

impl<T: Scalar> Lattice<T> {
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "dim {}", self.dim)?;
        writeln!(w, "epsilon {}", fmt17(self.epsilon))?;
        writeln!(w, "time_scale {}", self.time_scale.name())?;
        writeln!(w, "sites {}", self.len())?;
        writeln!(w, "edges {}", self.edge_count())?;
        for x in 0..self.len() {
            write!(w, "site {x}")?;
            for k in self.coords(x) {
                write!(w, " {k}")?;
            }
            writeln!(w, " {} {}", u8::from(self.boundary[x]), fmt17(self.holding[x]))?;
        }
        for x in 0..self.len() {
            for (&y, &p) in self.neighbors(x).iter().zip(self.jump_probs(x)) {
                writeln!(w, "edge {x} {y} {}", fmt17(p))?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = move || -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::parse(0, "unexpected end of file")),
            }
        };
        let (ln, magic) = next()?;
        if magic.trim() != MAGIC {
            return Err(Error::parse(ln, format!("expected '{MAGIC}'")));
        }
        let dim: usize = header(&mut next, "dim")?;
        if dim != 2 && dim != 3 {
            return Err(Error::parse(2, format!("dimension must be 2 or 3, got {dim}")));
        }
        let epsilon: T = header(&mut next, "epsilon")?;
        let (ln, ts) = next()?;
        let time_scale = ts
            .strip_prefix("time_scale ")
            .and_then(|s| TimeScale::from_name(s.trim()))
            .ok_or_else(|| Error::parse(ln, "expected 'time_scale <name>'"))?;
        let n: usize = header(&mut next, "sites")?;
        let m: usize = header(&mut next, "edges")?;

        let mut coords = Vec::with_capacity(n * dim);
        let mut boundary = Vec::with_capacity(n);
        let mut holding = Vec::with_capacity(n);
        for x in 0..n {
            let (ln, line) = next()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != dim + 4 || f[0] != "site" || field::<usize>(ln, f[1])? != x {
                return Err(Error::parse(ln, format!("expected 'site {x} ...' with {dim} coordinates")));
            }
            for tok in &f[2..2 + dim] {
                coords.push(field::<i64>(ln, tok)?);
            }
            boundary.push(match f[2 + dim] {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(ln, format!("boundary flag must be 0 or 1, got {other}"))),
            });
            let h: T = field(ln, f[3 + dim])?;
            if !(h > T::zero()) {
                return Err(Error::parse(ln, "holding time must be positive"));
            }
            holding.push(h);
        }
        let mut offsets = vec![0usize; n + 1];
        let mut targets = Vec::with_capacity(m);
        let mut probs = Vec::with_capacity(m);
        let mut last = 0usize;
        for _ in 0..m {
            let (ln, line) = next()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 || f[0] != "edge" {
                return Err(Error::parse(ln, "expected 'edge <x> <y> <p>'"));
            }
            let x: usize = field(ln, f[1])?;
            let y: usize = field(ln, f[2])?;
            if x >= n || y >= n || x < last {
                return Err(Error::parse(ln, "edge endpoints out of range or out of order"));
            }
            last = x;
            offsets[x + 1] += 1;
            targets.push(y as u32);
            probs.push(field::<T>(ln, f[3])?);
        }
        for x in 0..n {
            offsets[x + 1] += offsets[x];
        }
        Ok(Lattice::from_parts(dim, epsilon, time_scale, coords, offsets, targets, probs, boundary, holding))
    }

    pub fn from_text(s: &str) -> Result<Self> {
        Self::read_text(s.as_bytes())
    }
}

fn field<F: std::str::FromStr>(line: usize, tok: &str) -> Result<F> {
    tok.parse().map_err(|_| Error::parse(line, format!("cannot parse '{tok}'")))
}

fn header<F: std::str::FromStr>(next: &mut impl FnMut() -> Result<(usize, String)>, key: &str) -> Result<F> {
    let (ln, line) = next()?;
    let mut it = line.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(k), Some(v), None) if k == key => field(ln, v),
        _ => Err(Error::parse(ln, format!("expected '{key} <value>'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::super::build_lattice;
    use super::*;
    use crate::domain::DomainSpec;

    #[test]
    fn round_trip_is_bit_exact() {
        let dom = DomainSpec::<f64>::disc(&[0.1, -0.2], 0.9).unwrap();
        let l = build_lattice(&dom, 1.0 / 12.0, TimeScale::Laplacian).unwrap();
        let text = l.to_text();
        let back = Lattice::<f64>::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.len(), l.len());
        for x in 0..l.len() {
            assert_eq!(back.coords(x), l.coords(x));
            assert_eq!(back.neighbors(x), l.neighbors(x));
            for (a, b) in back.jump_probs(x).iter().zip(l.jump_probs(x)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            assert_eq!(back.holding_time(x).to_bits(), l.holding_time(x).to_bits());
            assert_eq!(back.is_boundary(x), l.is_boundary(x));
        }
        assert_eq!(back.epsilon().to_bits(), l.epsilon().to_bits());
    }

    #[test]
    fn rejects_malformed_input() {
        let l = build_lattice(&DomainSpec::<f64>::rectangle(&[1.0, 1.0]).unwrap(), 0.5, TimeScale::QuadraticVariation).unwrap();
        let text = l.to_text();
        assert!(Lattice::<f64>::from_text(&text.replace("dim 2", "dim 4")).is_err());
        assert!(Lattice::<f64>::from_text(&text.replace("edge 0 1", "edge 0 99")).is_err());
        let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(Lattice::<f64>::from_text(&truncated), Err(Error::Parse { .. })));
    }
}
