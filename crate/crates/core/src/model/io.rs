//! JSON form of an instance. Floats are written as shortest round-trip
//! decimal strings; plain JSON numbers are accepted on input.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::basis::RotationBasis;
use crate::model::params::{InstanceParams, Regime};

pub mod float_str {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    fn parse<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" | "Infinity" => Ok(f64::INFINITY),
                "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
                _ => s.parse().map_err(|_| E::custom(format!("bad float {s:?}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        parse(Repr::deserialize(d)?)
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&format!("{x}"))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?
                .into_iter()
                .map(parse::<D::Error>)
                .collect()
        }
    }

    pub mod opt_matrix {
        use super::*;

        #[derive(serde::Serialize, Deserialize)]
        struct Row(#[serde(with = "super::vec")] Vec<f64>);

        pub fn serialize<S: Serializer>(v: &Option<Vec<Vec<f64>>>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                None => s.serialize_none(),
                Some(rows) => {
                    let wrapped: Vec<Row> = rows.iter().map(|r| Row(r.clone())).collect();
                    serde::Serialize::serialize(&wrapped, s)
                }
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Vec<f64>>>, D::Error> {
            let rows = Option::<Vec<Row>>::deserialize(d)?;
            Ok(rows.map(|r| r.into_iter().map(|Row(v)| v).collect()))
        }
    }
}

/// On-disk instance. `basis` holds one row per chain vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub k: usize,
    #[serde(with = "float_str")]
    pub lambda: f64,
    #[serde(with = "float_str")]
    pub mu_k: f64,
    #[serde(with = "float_str")]
    pub gamma: f64,
    pub chain_len: usize,
    pub dim: usize,
    #[serde(default)]
    pub regime: Regime,
    #[serde(default, with = "float_str::opt_matrix", skip_serializing_if = "Option::is_none")]
    pub basis: Option<Vec<Vec<f64>>>,
}

impl InstanceFile {
    pub fn from_parts(params: &InstanceParams, basis: Option<&RotationBasis>) -> Self {
        InstanceFile {
            k: params.k,
            lambda: params.lambda,
            mu_k: params.mu_k,
            gamma: params.gamma,
            chain_len: params.chain_len,
            dim: params.dim,
            regime: params.regime,
            basis: basis.map(|b| b.vectors().iter().map(|v| v.to_vec()).collect()),
        }
    }

    pub fn params(&self) -> Result<InstanceParams> {
        InstanceParams::new(
            self.k,
            self.lambda,
            self.mu_k,
            self.gamma,
            self.chain_len,
            self.dim,
            self.regime,
        )
    }

    /// The stored basis, or the identity basis when none is stored.
    pub fn rotation_basis(&self) -> Result<RotationBasis> {
        match &self.basis {
            Some(rows) => {
                if rows.len() != self.chain_len {
                    return Err(Error::InvalidInput(format!(
                        "basis has {} rows, chain length is {}",
                        rows.len(),
                        self.chain_len
                    )));
                }
                RotationBasis::from_vectors(self.chain_len, self.dim, rows.clone())
            }
            None => RotationBasis::identity(self.chain_len, self.dim),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_every_bit() {
        let p = InstanceParams::new(3, 0.1 + 0.2, 1.0 / 3.0, 1e-300, 2, 3, Regime::Low).unwrap();
        let s = 0.5f64.sqrt();
        let b = RotationBasis::from_vectors(2, 3, vec![vec![s, s, 0.0], vec![s, -s, 0.0]]).unwrap();
        let f = InstanceFile::from_parts(&p, Some(&b));
        let back = InstanceFile::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.params().unwrap(), p);
    }

    #[test]
    fn plain_numbers_are_accepted() {
        let text = r#"{"k":2,"lambda":1,"mu_k":"2.5","gamma":3.0,"chain_len":4,"dim":5,"regime":"high"}"#;
        let f = InstanceFile::from_json(text).unwrap();
        assert_eq!(f.lambda, 1.0);
        assert_eq!(f.mu_k, 2.5);
        assert!(f.rotation_basis().unwrap().is_complete());
    }
}
