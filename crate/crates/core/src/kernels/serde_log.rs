//! Log-space vectors may hold `-inf` (a weight switched off). JSON has no
//! infinities, so those entries travel as `null`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let opt: Vec<Option<f64>> = v
        .iter()
        .map(|&x| if x == f64::NEG_INFINITY { None } else { Some(x) })
        .collect();
    opt.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    let opt = Vec::<Option<f64>>::deserialize(d)?;
    Ok(opt.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
}
