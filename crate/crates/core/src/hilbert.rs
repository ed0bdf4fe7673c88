//! Truncated Fock-space operators for the atom, the cavity and the oscillator.
//!
//! The composite space is always ordered atom ⊗ cavity ⊗ oscillator, so the
//! basis index of `|i_atom, i_cav, i_osc>` is
//! `(i_atom * cavity_dim + i_cav) * osc_dim + i_osc`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMatrix, CVector, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subsystem {
    Atom,
    Cavity,
    Oscillator,
}

impl Subsystem {
    pub const ALL: [Subsystem; 3] = [Subsystem::Atom, Subsystem::Cavity, Subsystem::Oscillator];

    pub fn position(self) -> usize {
        match self {
            Subsystem::Atom => 0,
            Subsystem::Cavity => 1,
            Subsystem::Oscillator => 2,
        }
    }
}

impl fmt::Display for Subsystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subsystem::Atom => "atom",
            Subsystem::Cavity => "cavity",
            Subsystem::Oscillator => "oscillator",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub atom_dim: usize,
    pub cavity_dim: usize,
    pub osc_dim: usize,
}

impl SpaceSpec {
    pub fn new(cavity_dim: usize, osc_dim: usize) -> Result<Self> {
        if cavity_dim < 2 || osc_dim < 2 {
            return Err(Error::InvalidDimension(format!(
                "mode truncations must be at least 2, got cavity {cavity_dim}, oscillator {osc_dim}"
            )));
        }
        Ok(SpaceSpec {
            atom_dim: 2,
            cavity_dim,
            osc_dim,
        })
    }

    /// Same truncation for both bosonic modes.
    pub fn uniform(dim: usize) -> Result<Self> {
        Self::new(dim, dim)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.atom_dim, self.cavity_dim, self.osc_dim]
    }

    pub fn dim_of(&self, which: Subsystem) -> usize {
        self.dims()[which.position()]
    }

    /// Total dimension N.
    pub fn dim(&self) -> usize {
        self.atom_dim * self.cavity_dim * self.osc_dim
    }

    pub fn index(&self, n_atom: usize, n_cav: usize, n_osc: usize) -> Result<usize> {
        for (n, d, name) in [
            (n_atom, self.atom_dim, "atom"),
            (n_cav, self.cavity_dim, "cavity"),
            (n_osc, self.osc_dim, "oscillator"),
        ] {
            if n >= d {
                return Err(Error::InvalidIndex(format!(
                    "{name} level {n} outside truncation {d}"
                )));
            }
        }
        Ok((n_atom * self.cavity_dim + n_cav) * self.osc_dim + n_osc)
    }

    /// Inverse of [`SpaceSpec::index`].
    pub fn levels(&self, index: usize) -> [usize; 3] {
        let n_osc = index % self.osc_dim;
        let rest = index / self.osc_dim;
        [rest / self.cavity_dim, rest % self.cavity_dim, n_osc]
    }
}

impl fmt::Display for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.atom_dim, self.cavity_dim, self.osc_dim)
    }
}

/// Dense operator on the composite space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub matrix: CMatrix,
    pub space: SpaceSpec,
}

impl Operator {
    pub fn new(matrix: CMatrix, space: SpaceSpec) -> Result<Self> {
        let n = space.dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::InvalidDimension(format!(
                "operator is {}x{}, space {space} needs {n}x{n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Operator { matrix, space })
    }

    pub fn zeros(space: SpaceSpec) -> Self {
        let n = space.dim();
        Operator {
            matrix: CMatrix::zeros(n, n),
            space,
        }
    }

    pub fn identity(space: SpaceSpec) -> Self {
        Operator {
            matrix: linalg::identity(space.dim()),
            space,
        }
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn adjoint(&self) -> Self {
        Operator {
            matrix: self.matrix.adjoint(),
            space: self.space,
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Operator {
            matrix: self.matrix.scale(factor),
            space: self.space,
        }
    }

    pub fn scale_complex(&self, factor: C64) -> Self {
        Operator {
            matrix: &self.matrix * factor,
            space: self.space,
        }
    }

    pub fn hermitian_deviation(&self) -> f64 {
        linalg::hermitian_deviation(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        self * other - other * self
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator {
            matrix: &self.matrix + &rhs.matrix,
            space: self.space,
        }
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator {
            matrix: &self.matrix - &rhs.matrix,
            space: self.space,
        }
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator {
            matrix: linalg::matmul(&self.matrix, &rhs.matrix),
            space: self.space,
        }
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        &self + &rhs
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        &self - &rhs
    }
}

/// Fock-basis lowering operator, `<n-1|a|n> = sqrt(n)`.
pub fn annihilator(dim: usize) -> Result<CMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!(
            "annihilator needs dim >= 2, got {dim}"
        )));
    }
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = c((n as f64).sqrt(), 0.0);
    }
    Ok(a)
}

/// `a^dagger a` on a single mode.
pub fn number(dim: usize) -> Result<CMatrix> {
    let a = annihilator(dim)?;
    Ok(a.adjoint() * a)
}

/// Atomic lowering operator; the excited state is level 1.
pub fn sigma_minus() -> CMatrix {
    annihilator(2).expect("dimension 2 is valid")
}

/// Places a single-mode operator on one factor, identity on the others.
pub fn embed(op: &CMatrix, which: Subsystem, space: SpaceSpec) -> Result<Operator> {
    let d = space.dim_of(which);
    if op.nrows() != d || op.ncols() != d {
        return Err(Error::InvalidDimension(format!(
            "{which} operator must be {d}x{d}, got {}x{}",
            op.nrows(),
            op.ncols()
        )));
    }
    let factors: Vec<CMatrix> = Subsystem::ALL
        .iter()
        .map(|&s| {
            if s == which {
                op.clone()
            } else {
                linalg::identity(space.dim_of(s))
            }
        })
        .collect();
    let matrix = linalg::kron(&linalg::kron(&factors[0], &factors[1]), &factors[2]);
    Operator::new(matrix, space)
}

/// Product basis vector `|n_atom, n_cav, n_osc>`.
pub fn fock_state(space: SpaceSpec, n_atom: usize, n_cav: usize, n_osc: usize) -> Result<CVector> {
    let idx = space.index(n_atom, n_cav, n_osc)?;
    let mut v = CVector::zeros(space.dim());
    v[idx] = c(1.0, 0.0);
    Ok(v)
}

/// Single-mode Fock vector `|n>` in a `dim`-level truncation.
pub fn fock(dim: usize, n: usize) -> Result<CVector> {
    if n >= dim {
        return Err(Error::InvalidIndex(format!("level {n} outside truncation {dim}")));
    }
    let mut v = CVector::zeros(dim);
    v[n] = c(1.0, 0.0);
    Ok(v)
}

pub fn projector(psi: &CVector) -> CMatrix {
    psi * psi.adjoint()
}

/// The ladder operators of the composite space, built once per truncation.
#[derive(Debug, Clone)]
pub struct Ladder {
    pub space: SpaceSpec,
    /// Cavity annihilator `a`.
    pub a: Operator,
    /// Oscillator annihilator `b`.
    pub b: Operator,
    /// Atomic lowering operator.
    pub sm: Operator,
}

impl Ladder {
    pub fn new(space: SpaceSpec) -> Result<Self> {
        Ok(Ladder {
            space,
            a: embed(&annihilator(space.cavity_dim)?, Subsystem::Cavity, space)?,
            b: embed(&annihilator(space.osc_dim)?, Subsystem::Oscillator, space)?,
            sm: embed(&sigma_minus(), Subsystem::Atom, space)?,
        })
    }

    pub fn n_cavity(&self) -> Operator {
        &self.a.adjoint() * &self.a
    }

    pub fn n_osc(&self) -> Operator {
        &self.b.adjoint() * &self.b
    }

    pub fn n_atom(&self) -> Operator {
        &self.sm.adjoint() * &self.sm
    }
}
