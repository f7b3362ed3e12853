//! JSON instance files.
//!
//! Rationals are `"num/den"` strings, sets are sorted index arrays and
//! partitions are arrays of such sets. The skew product is a dense matrix
//! indexed `[x][y]`.

use serde::{Deserialize, Serialize};
use skewlift::generate::{Instance, InstanceParams};
use skewlift::product::{Disintegration, ProductSpace, SkewProduct};
use skewlift::rational::{from_text, to_text};
use skewlift::set::{DEFAULT_CAP, DEFAULT_PRODUCT_CAP};
use skewlift::{FinMeasure, GroundSet, MSet, Rational, SigmaAlg};

pub const FORMAT: &str = "skewlift-instance/1";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format tag {0:?}")]
    Tag(String),
    #[error("bad rational {0:?}")]
    Rational(String),
    #[error("{what}: {source}")]
    Model {
        what: &'static str,
        source: skewlift::Error,
    },
}

fn model(what: &'static str) -> impl FnOnce(skewlift::Error) -> FormatError {
    move |source| FormatError::Model { what, source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub atoms: Vec<Vec<usize>>,
    pub weights: Vec<String>,
}

/// How the instance was generated, kept for reproduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecFile {
    pub seed: u64,
    pub size_x: usize,
    pub size_y: usize,
    pub null_rate: f64,
    pub coarse_b_rate: f64,
}

impl From<&InstanceParams> for SpecFile {
    fn from(p: &InstanceParams) -> Self {
        SpecFile {
            seed: p.seed,
            size_x: p.nx,
            size_y: p.ny,
            null_rate: p.null_rate,
            coarse_b_rate: p.coarse_b_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SpecFile>,
    pub p: MeasureFile,
    pub q: MeasureFile,
    pub r: Vec<Vec<String>>,
    pub disintegration: Vec<MeasureFile>,
    pub c: Vec<Vec<usize>>,
    pub gens: Vec<Vec<usize>>,
}

fn partition(alg: &SigmaAlg) -> Vec<Vec<usize>> {
    alg.atoms().iter().map(|a| a.to_vec()).collect()
}

fn texts(v: &[Rational]) -> Vec<String> {
    v.iter().map(to_text).collect()
}

fn measure_file(m: &FinMeasure) -> MeasureFile {
    MeasureFile {
        atoms: partition(m.algebra()),
        weights: texts(m.weights()),
    }
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance, spec: Option<SpecFile>) -> Self {
        let s = inst.r.space();
        InstanceFile {
            format: FORMAT.to_string(),
            spec,
            p: measure_file(s.p()),
            q: measure_file(s.q()),
            r: inst.r.matrix().iter().map(|row| texts(row)).collect(),
            disintegration: inst.dis.measures().iter().map(measure_file).collect(),
            c: partition(&inst.c),
            gens: inst.gens.iter().map(|g| g.to_vec()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("instance files serialize");
        text.push('\n');
        text
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        if file.format != FORMAT {
            return Err(FormatError::Tag(file.format));
        }
        Ok(file)
    }

    /// Rebuilds the instance. Partitions and weights must be well formed,
    /// but the marginals, the disintegration identities and the inner
    /// regularity of `c` are left to the checks.
    pub fn to_instance(&self, caps: Caps) -> Result<Instance, FormatError> {
        let p = measure(&self.p, caps.factor).map_err(model_or("p"))?;
        let q = measure(&self.q, caps.factor).map_err(model_or("q"))?;
        let space = ProductSpace::with_cap(p.clone(), q, caps.product).map_err(model("product space"))?;
        let mut weights = vec![skewlift::rational::zero(); space.ground().size()];
        if self.r.len() != space.nx() || self.r.iter().any(|row| row.len() != space.ny()) {
            return Err(FormatError::Model {
                what: "r",
                source: skewlift::Error::ShapeMismatch {
                    expected: space.ground().size(),
                    found: self.r.iter().map(Vec::len).sum(),
                },
            });
        }
        for (x, row) in self.r.iter().enumerate() {
            for (y, w) in row.iter().enumerate() {
                weights[space.index(x, y)] = rational(w)?;
            }
        }
        let r = SkewProduct::new_unchecked(space, weights).map_err(model("r"))?;
        let measures = self
            .disintegration
            .iter()
            .map(|m| measure(m, caps.factor))
            .collect::<Result<Vec<_>, _>>()
            .map_err(model_or("disintegration"))?;
        let dis = Disintegration::new(measures).map_err(model("disintegration"))?;
        let c = algebra(p.ground(), &self.c).map_err(model("c"))?;
        let gens = self
            .gens
            .iter()
            .map(|g| p.ground().set(g))
            .collect::<Result<Vec<MSet>, _>>()
            .map_err(model("gens"))?;
        Ok(Instance { r, dis, c, gens })
    }
}

/// Caps on the factor spaces and on the materialized product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub factor: usize,
    pub product: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            factor: DEFAULT_CAP,
            product: DEFAULT_PRODUCT_CAP,
        }
    }
}

enum Partial {
    Rational(String),
    Model(skewlift::Error),
}

fn model_or(what: &'static str) -> impl FnOnce(Partial) -> FormatError {
    move |e| match e {
        Partial::Rational(s) => FormatError::Rational(s),
        Partial::Model(source) => FormatError::Model { what, source },
    }
}

fn rational(text: &str) -> Result<Rational, FormatError> {
    from_text(text).ok_or_else(|| FormatError::Rational(text.to_string()))
}

fn algebra(g: GroundSet, atoms: &[Vec<usize>]) -> skewlift::Result<SigmaAlg> {
    let blocks = atoms.iter().map(|a| g.set(a)).collect::<skewlift::Result<Vec<_>>>()?;
    SigmaAlg::from_blocks(g, &blocks)
}

fn measure(m: &MeasureFile, cap: usize) -> Result<FinMeasure, Partial> {
    let g = GroundSet::with_cap(m.weights.len(), cap).map_err(Partial::Model)?;
    let weights = m
        .weights
        .iter()
        .map(|w| from_text(w).ok_or_else(|| Partial::Rational(w.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let alg = algebra(g, &m.atoms).map_err(Partial::Model)?;
    FinMeasure::new(alg, weights).map_err(Partial::Model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use skewlift::generate::generate_instance;

    #[test]
    fn round_trip_is_exact() {
        for seed in 0..10 {
            let params = InstanceParams::new(4, 3, seed);
            let inst = generate_instance(&params).unwrap();
            let file = InstanceFile::from_instance(&inst, Some((&params).into()));
            let text = file.to_json();
            let back = InstanceFile::parse(&text).unwrap();
            assert_eq!(back, file);
            assert_eq!(back.to_instance(Caps::default()).unwrap(), inst);
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let inst = generate_instance(&InstanceParams::new(2, 2, 1)).unwrap();
        let mut file = InstanceFile::from_instance(&inst, None);
        file.p.weights[0] = "1/0".into();
        assert!(matches!(file.to_instance(Caps::default()), Err(FormatError::Rational(_))));
        let mut file = InstanceFile::from_instance(&inst, None);
        file.format = "other".into();
        assert!(matches!(InstanceFile::parse(&file.to_json()), Err(FormatError::Tag(_))));
        assert!(InstanceFile::parse("{").is_err());
    }
}
