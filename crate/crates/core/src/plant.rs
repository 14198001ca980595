use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{self, Mat, Tolerances};

/// Discrete-time plant `x+ = A x + B (u + a_u)`, `y = C x + a_y`.
///
/// Construction checks that `B` has full column rank, `(A, B)` is
/// stabilizable and `(A, C)` is detectable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlantDocument", into = "PlantDocument")]
pub struct PlantModel {
    a: Mat,
    b: Mat,
    c: Mat,
}

/// On-disk layout: `{"a": [[..]], "b": [[..]], "c": [[..]]}` with row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantDocument {
    #[serde(with = "crate::serde_mat")]
    pub a: Mat,
    #[serde(with = "crate::serde_mat")]
    pub b: Mat,
    #[serde(with = "crate::serde_mat")]
    pub c: Mat,
}

impl TryFrom<PlantDocument> for PlantModel {
    type Error = crate::Error;

    fn try_from(doc: PlantDocument) -> Result<Self> {
        PlantModel::new(doc.a, doc.b, doc.c, &Tolerances::default())
    }
}

impl From<PlantModel> for PlantDocument {
    fn from(p: PlantModel) -> Self {
        PlantDocument { a: p.a, b: p.b, c: p.c }
    }
}

impl PlantModel {
    pub fn new(a: Mat, b: Mat, c: Mat, tol: &Tolerances) -> Result<Self> {
        let plant = Self::unchecked(a, b, c)?;
        let n_u = plant.n_u();
        if linalg::rank_tol(&plant.b, tol)? != n_u {
            return Err(invalid("B must have full column rank"));
        }
        if !linalg::is_stabilizable(&plant.a, &plant.b, tol)? {
            return Err(invalid("(A, B) must be stabilizable"));
        }
        if !linalg::is_detectable(&plant.a, &plant.c, tol)? {
            return Err(invalid("(A, C) must be detectable"));
        }
        Ok(plant)
    }

    /// Dimension and finiteness checks only. Intended for probing degenerate
    /// configurations; synthesis routines still check their own preconditions.
    pub fn unchecked(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(invalid(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(invalid(format!(
                "B must be {n}xn_u with n_u >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(invalid(format!(
                "C must be n_yx{n} with n_y >= 1, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        linalg::check_finite(&a, "A")?;
        linalg::check_finite(&b, "B")?;
        linalg::check_finite(&c, "C")?;
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn c(&self) -> &Mat {
        &self.c
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }
}
