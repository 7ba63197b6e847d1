//! JSON game and policy files.
//!
//! Every numeric leaf may be a JSON number, a decimal string (`"0.25"`), or
//! an exact fraction string (`"1/3"`). Fractions are parsed as exact
//! rationals and rounded to the nearest `f64` once.

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::game::ConstraintMode;

/// Parses `"p/q"`, a decimal, or an integer string.
pub fn parse_number(text: &str) -> std::result::Result<f64, String> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let ratio = BigRational::from_str(&format!("{}/{}", num.trim(), den.trim()))
            .map_err(|_| format!("invalid fraction \"{text}\""))?;
        if ratio.denom().is_zero() {
            return Err(format!("zero denominator in \"{text}\""));
        }
        return ratio
            .to_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("fraction \"{text}\" is not representable"));
    }
    let v = f64::from_str(text).map_err(|_| format!("invalid number \"{text}\""))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite number \"{text}\""))
    }
}

/// A nested array of numbers with unchecked depth; shapes are validated
/// against the game dimensions after parsing.
#[derive(Clone, Debug, PartialEq)]
pub enum NumTree {
    Leaf(f64),
    Node(Vec<NumTree>),
}

impl NumTree {
    pub fn from_vec1(v: &[f64]) -> Self {
        NumTree::Node(v.iter().map(|&x| NumTree::Leaf(x)).collect())
    }

    pub fn from_vec2(v: &[Vec<f64>]) -> Self {
        NumTree::Node(v.iter().map(|r| NumTree::from_vec1(r)).collect())
    }

    pub fn from_vec3(v: &[Vec<Vec<f64>>]) -> Self {
        NumTree::Node(v.iter().map(|r| NumTree::from_vec2(r)).collect())
    }

    pub fn empty() -> Self {
        NumTree::Node(Vec::new())
    }

    /// Flattens the tree if it is a dense array of exactly `dims`.
    ///
    /// On failure the error names the offending path, e.g. `rewards[1][0]`.
    pub fn flatten(&self, dims: &[usize], path: &str) -> std::result::Result<Vec<f64>, String> {
        let mut out = Vec::with_capacity(dims.iter().product());
        self.flatten_into(dims, path.to_string(), &mut out)?;
        Ok(out)
    }

    fn flatten_into(
        &self,
        dims: &[usize],
        path: String,
        out: &mut Vec<f64>,
    ) -> std::result::Result<(), String> {
        match (self, dims.split_first()) {
            (NumTree::Leaf(v), None) => {
                out.push(*v);
                Ok(())
            }
            (NumTree::Leaf(_), Some((d, _))) => {
                Err(format!("{path}: expected an array of length {d}, found a number"))
            }
            (NumTree::Node(_), None) => Err(format!("{path}: expected a number, found an array")),
            (NumTree::Node(children), Some((&d, rest))) => {
                if children.len() != d {
                    return Err(format!(
                        "{path}: expected length {d}, found {}",
                        children.len()
                    ));
                }
                for (k, child) in children.iter().enumerate() {
                    child.flatten_into(rest, format!("{path}[{k}]"), out)?;
                }
                Ok(())
            }
        }
    }

    /// Builds a tree of shape `dims` from a flat row-major buffer.
    pub fn from_flat(dims: &[usize], data: &[f64]) -> Self {
        match dims.split_first() {
            None => NumTree::Leaf(data[0]),
            Some((&d, rest)) => {
                let chunk: usize = rest.iter().product();
                NumTree::Node(
                    (0..d)
                        .map(|k| NumTree::from_flat(rest, &data[k * chunk..(k + 1) * chunk]))
                        .collect(),
                )
            }
        }
    }
}

impl Serialize for NumTree {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NumTree::Leaf(v) => serializer.serialize_f64(*v),
            NumTree::Node(children) => {
                let mut seq = serializer.serialize_seq(Some(children.len()))?;
                for c in children {
                    seq.serialize_element(c)?;
                }
                seq.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for NumTree {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct TreeVisitor;

        impl<'de> Visitor<'de> for TreeVisitor {
            type Value = NumTree;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, a fraction string \"p/q\", or an array")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<NumTree, E> {
                Ok(NumTree::Leaf(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<NumTree, E> {
                Ok(NumTree::Leaf(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<NumTree, E> {
                Ok(NumTree::Leaf(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<NumTree, E> {
                parse_number(v).map(NumTree::Leaf).map_err(E::custom)
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<NumTree, A::Error> {
                let mut children = Vec::with_capacity(seq.size_hint().unwrap_or(0));
                while let Some(child) = seq.next_element()? {
                    children.push(child);
                }
                Ok(NumTree::Node(children))
            }
        }

        deserializer.deserialize_any(TreeVisitor)
    }
}

/// On-disk game document.
///
/// Table layouts (joint actions row-major over players, last player fastest):
/// `rewards[player][t][state][joint]`,
/// `constraints[player][j][t][state][joint]` (playerwise) or
/// `constraints[j][t][state][joint]` (common),
/// `thresholds[player][j]` (playerwise) or `thresholds[j]` (common),
/// `kernel[t][state][joint][next_state]` for `t < horizon - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameDocument {
    pub num_players: usize,
    pub horizon: usize,
    pub states: Vec<String>,
    pub actions: Vec<Vec<String>>,
    pub rewards: NumTree,
    pub constraints: NumTree,
    pub thresholds: NumTree,
    pub kernel: NumTree,
    pub rho: NumTree,
    pub constraint_mode: ConstraintMode,
}

/// On-disk policy document: `policy[t][state][joint]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub policy: NumTree,
}
