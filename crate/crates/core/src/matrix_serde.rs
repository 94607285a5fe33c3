//! Row-major JSON encoding for dense matrices: `[[r0c0, r0c1, ...], ...]`.

use ndarray::{Array1, Array2};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

pub fn from_rows(rows: &[Vec<f64>], ncols_if_empty: usize) -> Result<Array2<f64>, String> {
    let ncols = rows.first().map_or(ncols_if_empty, Vec::len);
    let mut flat = Vec::with_capacity(rows.len() * ncols);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(format!("row {i} has {} entries, expected {ncols}", r.len()));
        }
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| e.to_string())
}

pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
    rows(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
    let rows = Vec::<Vec<f64>>::deserialize(d)?;
    from_rows(&rows, 0).map_err(D::Error::custom)
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Array1<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.to_vec().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array1<f64>, D::Error> {
        Ok(Array1::from(Vec::<f64>::deserialize(d)?))
    }
}
