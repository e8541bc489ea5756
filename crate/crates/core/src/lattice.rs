//! Cubic lattices, site indexing and the hypercube family used by `D_l`.
//!
//! Sites are numbered with axis 0 as the most significant coordinate, so
//! `site = ((x_0 * n + x_1) * n + x_2) ...`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DIM_GUARD: usize = 1 << 13;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub dimension: usize,
    pub side: usize,
    pub local_dim: usize,
    #[serde(default)]
    pub boundary: Boundary,
}

impl LatticeSpec {
    pub fn new(dimension: usize, side: usize, local_dim: usize, boundary: Boundary) -> Result<Self> {
        let spec = Self { dimension, side, local_dim, boundary };
        spec.validate()?;
        Ok(spec)
    }

    /// A chain of `n` qubits.
    pub fn chain(n: usize, boundary: Boundary) -> Self {
        Self { dimension: 1, side: n, local_dim: 2, boundary }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.side == 0 {
            return Err(Error::InvalidArgument("lattice dimension and side must be positive".into()));
        }
        if self.local_dim < 2 {
            return Err(Error::InvalidArgument("local dimension must be at least 2".into()));
        }
        if self.side.checked_pow(self.dimension as u32).is_none() {
            return Err(Error::InvalidArgument("site count overflows".into()));
        }
        Ok(())
    }

    pub fn num_sites(&self) -> usize {
        self.side.pow(self.dimension as u32)
    }

    /// `d^N`, or `None` on overflow.
    pub fn hilbert_dim_unchecked(&self) -> Option<usize> {
        self.local_dim.checked_pow(self.num_sites() as u32)
    }

    pub fn hilbert_dim(&self, guard: usize) -> Result<usize> {
        match self.hilbert_dim_unchecked() {
            Some(dim) if dim <= guard => Ok(dim),
            Some(dim) => Err(Error::DimensionGuard { dim, guard }),
            None => Err(Error::DimensionGuard { dim: usize::MAX, guard }),
        }
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut c = vec![0; self.dimension];
        let mut s = site;
        for a in (0..self.dimension).rev() {
            c[a] = s % self.side;
            s /= self.side;
        }
        c
    }

    pub fn site(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &x| acc * self.side + x)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.num_sites() {
            return Err(Error::InvalidArgument(format!(
                "site {site} out of range for {} sites",
                self.num_sites()
            )));
        }
        Ok(())
    }

    /// Shift a site by `shift` along each axis. Open lattices return `None`
    /// when the image leaves the lattice.
    pub fn translate(&self, site: usize, shift: &[i64]) -> Option<usize> {
        let n = self.side as i64;
        let mut c = self.coords(site);
        for (x, &s) in c.iter_mut().zip(shift) {
            let y = *x as i64 + s;
            *x = match self.boundary {
                Boundary::Periodic => y.rem_euclid(n) as usize,
                Boundary::Open if (0..n).contains(&y) => y as usize,
                Boundary::Open => return None,
            };
        }
        Some(self.site(&c))
    }
}

/// Manhattan distance; periodic axes use the shorter way around.
pub fn lattice_distance(i: usize, j: usize, lattice: &LatticeSpec) -> Result<usize> {
    lattice.check_site(i)?;
    lattice.check_site(j)?;
    let (a, b) = (lattice.coords(i), lattice.coords(j));
    Ok(a.iter()
        .zip(&b)
        .map(|(&x, &y)| {
            let d = x.abs_diff(y);
            match lattice.boundary {
                Boundary::Open => d,
                Boundary::Periodic => d.min(lattice.side - d),
            }
        })
        .sum())
}

/// Ordered set of distinct sites.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Region(Vec<usize>);

impl Region {
    pub fn new(sites: Vec<usize>) -> Result<Self> {
        let mut seen = sites.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("region sites must be distinct".into()));
        }
        Ok(Self(sites))
    }

    /// Validates against a lattice as well.
    pub fn on(lattice: &LatticeSpec, sites: Vec<usize>) -> Result<Self> {
        for &s in &sites {
            lattice.check_site(s)?;
        }
        Self::new(sites)
    }

    pub fn sites(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.0.contains(&site)
    }

    pub fn diameter(&self, lattice: &LatticeSpec) -> Result<usize> {
        let mut best = 0;
        for (k, &a) in self.0.iter().enumerate() {
            for &b in &self.0[k + 1..] {
                best = best.max(lattice_distance(a, b, lattice)?);
            }
        }
        Ok(best)
    }

    /// The shift vector mapping `self` onto `other` site by site, if one exists.
    pub fn translation_to(&self, other: &Region, lattice: &LatticeSpec) -> Option<Vec<i64>> {
        if self.len() != other.len() || self.is_empty() {
            return None;
        }
        let (a, b) = (lattice.coords(self.0[0]), lattice.coords(other.0[0]));
        let shift: Vec<i64> = a.iter().zip(&b).map(|(&x, &y)| y as i64 - x as i64).collect();
        let ok = self
            .0
            .iter()
            .zip(&other.0)
            .all(|(&s, &t)| lattice.translate(s, &shift) == Some(t));
        ok.then_some(shift)
    }
}

impl TryFrom<Vec<usize>> for Region {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Region> for Vec<usize> {
    fn from(r: Region) -> Self {
        r.0
    }
}

/// Every axis-aligned side-`l` hypercube, ordered by base coordinate. Sites
/// inside a cube are listed in lexicographic offset order from the base.
pub fn enumerate_hypercubes(lattice: &LatticeSpec, l: usize) -> Result<Vec<Region>> {
    let n = lattice.side;
    if l == 0 || l > n {
        return Err(Error::InvalidArgument(format!("hypercube side {l} not in 1..={n}")));
    }
    let d = lattice.dimension;
    let bases_per_axis = match lattice.boundary {
        Boundary::Open => n - l + 1,
        // With l = n every base gives the same site set, but translates are
        // still distinct ordered regions.
        Boundary::Periodic => n,
    };
    let offsets = odometer(d, l);
    let mut out = Vec::new();
    for base in odometer(d, bases_per_axis) {
        let sites = offsets
            .iter()
            .map(|off| {
                let c: Vec<usize> = base.iter().zip(off).map(|(&b, &o)| (b + o) % n).collect();
                lattice.site(&c)
            })
            .collect();
        out.push(Region(sites));
    }
    Ok(out)
}

/// All vectors in `{0..radix}^d` in lexicographic order.
fn odometer(d: usize, radix: usize) -> Vec<Vec<usize>> {
    let count = radix.pow(d as u32);
    (0..count)
        .map(|mut k| {
            let mut v = vec![0; d];
            for a in (0..d).rev() {
                v[a] = k % radix;
                k /= radix;
            }
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(rs: &[Region]) -> Vec<Vec<usize>> {
        rs.iter().map(|r| r.sites().to_vec()).collect()
    }

    #[test]
    fn open_chain_cubes() {
        let lat = LatticeSpec::chain(4, Boundary::Open);
        let cubes = enumerate_hypercubes(&lat, 2).unwrap();
        assert_eq!(sets(&cubes), vec![vec![0, 1], vec![1, 2], vec![2, 3]]);
    }

    #[test]
    fn periodic_chain_includes_wrap() {
        let lat = LatticeSpec::chain(4, Boundary::Periodic);
        let cubes = enumerate_hypercubes(&lat, 2).unwrap();
        assert_eq!(cubes.len(), 4);
        assert_eq!(cubes[3].sites(), &[3, 0]);
    }

    #[test]
    fn full_square_is_one_cube() {
        let lat = LatticeSpec::new(2, 3, 2, Boundary::Open).unwrap();
        let cubes = enumerate_hypercubes(&lat, 3).unwrap();
        assert_eq!(cubes.len(), 1);
        assert_eq!(cubes[0].len(), 9);
        assert!(enumerate_hypercubes(&lat, 4).is_err());
    }

    #[test]
    fn cube_counts() {
        for (d, n, l) in [(1, 5, 2), (2, 3, 2), (2, 4, 1), (3, 2, 1)] {
            let open = LatticeSpec::new(d, n, 2, Boundary::Open).unwrap();
            let per = LatticeSpec::new(d, n, 2, Boundary::Periodic).unwrap();
            let co = enumerate_hypercubes(&open, l).unwrap();
            assert_eq!(co.len(), (n - l + 1).pow(d as u32));
            assert!(co.iter().all(|r| r.len() == l.pow(d as u32)));
            assert_eq!(enumerate_hypercubes(&per, l).unwrap().len(), n.pow(d as u32));
        }
    }

    #[test]
    fn distances() {
        let open = LatticeSpec::chain(6, Boundary::Open);
        let per = LatticeSpec::chain(6, Boundary::Periodic);
        assert_eq!(lattice_distance(0, 5, &open).unwrap(), 5);
        assert_eq!(lattice_distance(0, 5, &per).unwrap(), 1);
        let sq = LatticeSpec::new(2, 3, 2, Boundary::Open).unwrap();
        assert_eq!(lattice_distance(sq.site(&[0, 0]), sq.site(&[2, 1]), &sq).unwrap(), 3);
        assert!(lattice_distance(0, 9, &sq).is_err());
    }

    #[test]
    fn coords_roundtrip() {
        let lat = LatticeSpec::new(3, 3, 2, Boundary::Open).unwrap();
        for s in 0..lat.num_sites() {
            assert_eq!(lat.site(&lat.coords(s)), s);
        }
    }

    #[test]
    fn periodic_family_closed_under_translation() {
        let lat = LatticeSpec::new(2, 3, 2, Boundary::Periodic).unwrap();
        let cubes = enumerate_hypercubes(&lat, 2).unwrap();
        for axis in 0..2 {
            let mut shift = vec![0i64; 2];
            shift[axis] = 1;
            let mut moved: Vec<Vec<usize>> = cubes
                .iter()
                .map(|r| r.sites().iter().map(|&s| lat.translate(s, &shift).unwrap()).collect())
                .collect();
            let mut orig = sets(&cubes);
            moved.sort();
            orig.sort();
            assert_eq!(moved, orig);
        }
    }

    #[test]
    fn translation_between_regions() {
        let lat = LatticeSpec::chain(5, Boundary::Periodic);
        let x = Region::new(vec![0, 1]).unwrap();
        let y = Region::new(vec![4, 0]).unwrap();
        assert_eq!(x.translation_to(&y, &lat), Some(vec![4]));
        assert_eq!(x.translation_to(&Region::new(vec![0, 2]).unwrap(), &lat), None);
    }

    #[test]
    fn guard_applies() {
        let lat = LatticeSpec::chain(14, Boundary::Open);
        assert!(matches!(lat.hilbert_dim(DEFAULT_DIM_GUARD), Err(Error::DimensionGuard { .. })));
        assert_eq!(LatticeSpec::chain(13, Boundary::Open).hilbert_dim(DEFAULT_DIM_GUARD).unwrap(), 8192);
    }
}
