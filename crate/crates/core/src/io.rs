//! JSON file formats. Matrices are `{"rows", "cols", "data"}` with `data` a
//! row-major array of `[re, im]` pairs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{ComplexMatrix, C64};
use crate::quadruple::{Quadruple, QuadrupleError};
use crate::realization::{Realization, RealizationError};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                data.push([z.re, z.im]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self, name: &str) -> Result<ComplexMatrix, SchemaError> {
        if self.data.len() != self.rows * self.cols {
            return Err(SchemaError::Invalid(format!(
                "{name}: {}x{} matrix with {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        if self.data.iter().flatten().any(|x| !x.is_finite()) {
            return Err(SchemaError::Invalid(format!("{name}: non-finite entry")));
        }
        let entries: Vec<C64> = self.data.iter().map(|&[re, im]| C64::new(re, im)).collect();
        Ok(ComplexMatrix::from_row_slice(self.rows, self.cols, &entries))
    }
}

fn expect_shape(name: &str, m: &MatrixJson, rows: usize, cols: usize) -> Result<(), SchemaError> {
    if (m.rows, m.cols) != (rows, cols) {
        return Err(SchemaError::Invalid(format!(
            "{name} must be {rows}x{cols} per the declared dimensions, got {}x{}",
            m.rows, m.cols
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationFile {
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
    #[serde(rename = "A")]
    pub a: MatrixJson,
    #[serde(rename = "B")]
    pub b: MatrixJson,
    #[serde(rename = "C")]
    pub c: MatrixJson,
}

impl RealizationFile {
    pub fn from_realization(r: &Realization) -> Self {
        Self {
            m1: r.m1(),
            m2: r.m2(),
            n: r.n(),
            a: MatrixJson::from_matrix(r.a()),
            b: MatrixJson::from_matrix(r.b()),
            c: MatrixJson::from_matrix(r.c()),
        }
    }

    pub fn to_realization(&self) -> Result<Realization, SchemaError> {
        expect_shape("A", &self.a, self.n, self.n)?;
        expect_shape("B", &self.b, self.n, self.m1)?;
        expect_shape("C", &self.c, self.m2, self.n)?;
        Realization::new(self.a.to_matrix("A")?, self.b.to_matrix("B")?, self.c.to_matrix("C")?)
            .map_err(|e: RealizationError| SchemaError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadrupleFile {
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
    pub alpha: MatrixJson,
    #[serde(rename = "S0")]
    pub s0: MatrixJson,
    pub theta1: MatrixJson,
    pub theta2: MatrixJson,
}

impl QuadrupleFile {
    pub fn from_quadruple(q: &Quadruple) -> Self {
        Self {
            m1: q.m1(),
            m2: q.m2(),
            n: q.n(),
            alpha: MatrixJson::from_matrix(q.alpha()),
            s0: MatrixJson::from_matrix(q.s0()),
            theta1: MatrixJson::from_matrix(q.theta1()),
            theta2: MatrixJson::from_matrix(q.theta2()),
        }
    }

    pub fn to_quadruple(&self) -> Result<Quadruple, SchemaError> {
        expect_shape("alpha", &self.alpha, self.n, self.n)?;
        expect_shape("S0", &self.s0, self.n, self.n)?;
        expect_shape("theta1", &self.theta1, self.n, self.m1)?;
        expect_shape("theta2", &self.theta2, self.n, self.m2)?;
        Quadruple::new(
            self.alpha.to_matrix("alpha")?,
            self.s0.to_matrix("S0")?,
            self.theta1.to_matrix("theta1")?,
            self.theta2.to_matrix("theta2")?,
        )
        .map_err(|e: QuadrupleError| SchemaError::Invalid(e.to_string()))
    }
}

pub fn realization_to_json(r: &Realization) -> String {
    serde_json::to_string_pretty(&RealizationFile::from_realization(r)).expect("plain data serializes")
}

pub fn realization_from_json(text: &str) -> Result<Realization, SchemaError> {
    serde_json::from_str::<RealizationFile>(text)?.to_realization()
}

pub fn quadruple_to_json(q: &Quadruple) -> String {
    serde_json::to_string_pretty(&QuadrupleFile::from_quadruple(q)).expect("plain data serializes")
}

pub fn quadruple_from_json(text: &str) -> Result<Quadruple, SchemaError> {
    serde_json::from_str::<QuadrupleFile>(text)?.to_quadruple()
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::scalar;

    #[test]
    fn realization_round_trip_is_exact() {
        let r = Realization::new(
            scalar(C64::new(0.1, -1.0 / 3.0)),
            scalar(C64::new(1.0, 0.0)),
            scalar(C64::new(0.0, -(3f64.sqrt()))),
        )
        .unwrap();
        let back = realization_from_json(&realization_to_json(&r)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn row_major_order() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(3.0, 0.0), C64::new(4.0, 0.0)]);
        let j = MatrixJson::from_matrix(&m);
        assert_eq!(j.data[1], [2.0, 0.0]);
        assert_eq!(j.to_matrix("m").unwrap(), m);
    }

    #[test]
    fn schema_violations() {
        let good = r#"{"m1":1,"m2":1,"n":1,"A":{"rows":1,"cols":1,"data":[[0,-1]]},"B":{"rows":1,"cols":1,"data":[[1,0]]},"C":{"rows":1,"cols":1,"data":[[0,-1]]}}"#;
        assert!(realization_from_json(good).is_ok());
        assert!(realization_from_json(&good.replace("\"m1\":1", "\"m1\":2")).is_err());
        assert!(realization_from_json(&good.replace("[[1,0]]", "[[1,0],[2,0]]")).is_err());
        assert!(realization_from_json(&good.replace("\"n\":1,", "\"n\":1,\"extra\":0,")).is_err());
        assert!(realization_from_json("{").is_err());
    }

    #[test]
    fn quadruple_round_trip() {
        let q = Quadruple::new(
            scalar(C64::new(0.0, -1.0)),
            scalar(C64::new(1.0, 0.0)),
            scalar(C64::new(1.0, 0.0)),
            scalar(C64::new(3f64.sqrt(), 0.0)),
        )
        .unwrap();
        assert_eq!(quadruple_from_json(&quadruple_to_json(&q)).unwrap(), q);
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(-2.0 / 3.0), "-6.6666666666666663e-1");
    }
}
