use std::collections::HashSet;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{BasketLeg, CallSurface, Carry, ForwardCurve, RateCurve, VolQuotes, VolSurface};
use crate::error::{Error, Result};

/// Largest relative gap between the quoted index spot and the basket spot
/// that is absorbed by rescaling the weights.
pub const SPOT_RECONCILE_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvePoint {
    pub t: f64,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetFile {
    pub id: String,
    pub spot: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dividend_curve: Vec<CurvePoint>,
    pub vols: VolQuotes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightFile {
    pub id: String,
    pub weight: f64,
}

/// On-disk snapshot layout, documented in the README.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotFile {
    pub as_of: String,
    pub discount_curve: Vec<CurvePoint>,
    pub assets: Vec<AssetFile>,
    pub index: AssetFile,
    pub composition: Vec<WeightFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

#[derive(Clone, Debug)]
pub struct AssetQuote {
    pub id: String,
    pub spot: f64,
    pub dividend_curve: RateCurve,
    pub vol_surface: VolSurface,
}

impl AssetQuote {
    pub fn new(
        id: impl Into<String>,
        spot: f64,
        dividend_curve: RateCurve,
        vol_surface: VolSurface,
    ) -> Result<Self> {
        let id = id.into();
        if !(spot.is_finite() && spot > 0.0) {
            return Err(Error::Schema(format!(
                "asset {id}: spot must be positive, got {spot}"
            )));
        }
        Ok(Self {
            id,
            spot,
            dividend_curve,
            vol_surface,
        })
    }

    fn from_file(f: &AssetFile) -> Result<Self> {
        let curve = curve_from_points(&f.dividend_curve)?;
        let surface = VolSurface::from_quotes(&f.vols)
            .map_err(|e| Error::Schema(format!("asset {}: {e}", f.id)))?;
        Self::new(f.id.clone(), f.spot, curve, surface)
    }

    fn to_file(&self) -> AssetFile {
        AssetFile {
            id: self.id.clone(),
            spot: self.spot,
            dividend_curve: curve_to_points(&self.dividend_curve),
            vols: self.vol_surface.to_quotes(),
        }
    }
}

/// Index weights `α_i ≥ 0`, one per constituent in snapshot asset order.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexComposition {
    weights: Vec<(String, f64)>,
}

impl IndexComposition {
    pub fn new(weights: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (id, w) in &weights {
            if !w.is_finite() {
                return Err(Error::Schema(format!("weight of {id} is not finite")));
            }
            if *w < 0.0 {
                return Err(Error::NegativeWeight {
                    id: id.clone(),
                    weight: *w,
                });
            }
            if !seen.insert(id.clone()) {
                return Err(Error::Schema(format!("duplicate composition entry {id}")));
            }
        }
        if !weights.iter().any(|(_, w)| *w > 0.0) {
            return Err(Error::Schema(
                "composition needs at least one positive weight".into(),
            ));
        }
        Ok(Self { weights })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.weights
    }

    pub fn weight_of(&self, id: &str) -> f64 {
        self.weights
            .iter()
            .find(|(i, _)| i == id)
            .map_or(0.0, |(_, w)| *w)
    }
}

/// The complete market input: rates, constituents, index and composition.
#[derive(Clone, Debug)]
pub struct MarketSnapshot {
    pub as_of: NaiveDate,
    pub discount_curve: RateCurve,
    pub assets: Vec<AssetQuote>,
    /// The index quote. Its dividend curve is ignored: the index carry is
    /// derived from the constituent forwards.
    pub index: AssetQuote,
    pub composition: IndexComposition,
    pub generator: Option<serde_json::Value>,
}

impl MarketSnapshot {
    /// Validate and reconcile. Weights are rescaled when the basket spot
    /// misses the index spot by at most [`SPOT_RECONCILE_TOLERANCE`].
    pub fn new(
        as_of: NaiveDate,
        discount_curve: RateCurve,
        assets: Vec<AssetQuote>,
        index: AssetQuote,
        composition: IndexComposition,
    ) -> Result<Self> {
        if assets.is_empty() {
            return Err(Error::Schema("snapshot has no constituents".into()));
        }
        let mut ids = HashSet::new();
        for a in &assets {
            if !ids.insert(a.id.as_str()) {
                return Err(Error::Schema(format!("duplicate asset id {}", a.id)));
            }
        }
        for (id, _) in composition.entries() {
            if !ids.contains(id.as_str()) {
                return Err(Error::UnresolvedAsset(id.clone()));
            }
        }
        let mut snap = Self {
            as_of,
            discount_curve,
            assets,
            index,
            composition,
            generator: None,
        };
        snap.reconcile_index_spot()?;
        Ok(snap)
    }

    fn reconcile_index_spot(&mut self) -> Result<()> {
        let basket = self.basket_spot();
        let index = self.index.spot;
        let relative = (basket - index).abs() / index;
        if relative > SPOT_RECONCILE_TOLERANCE {
            return Err(Error::SpotMismatch {
                index,
                basket,
                relative,
            });
        }
        if relative > 0.0 {
            let scale = index / basket;
            let entries = self
                .composition
                .entries()
                .iter()
                .map(|(id, w)| (id.clone(), w * scale))
                .collect();
            self.composition = IndexComposition::new(entries)?;
        }
        Ok(())
    }

    pub fn from_file_data(file: &SnapshotFile) -> Result<Self> {
        let as_of = NaiveDate::parse_from_str(&file.as_of, "%Y-%m-%d")
            .map_err(|e| Error::Schema(format!("as_of {:?}: {e}", file.as_of)))?;
        let curve = curve_from_points(&file.discount_curve)?;
        let assets = file
            .assets
            .iter()
            .map(AssetQuote::from_file)
            .collect::<Result<Vec<_>>>()?;
        let index = AssetQuote::from_file(&file.index)?;
        let composition = IndexComposition::new(
            file.composition
                .iter()
                .map(|w| (w.id.clone(), w.weight))
                .collect(),
        )?;
        let mut snap = Self::new(as_of, curve, assets, index, composition)?;
        snap.generator = file.generator.clone();
        Ok(snap)
    }

    pub fn to_file_data(&self) -> SnapshotFile {
        SnapshotFile {
            as_of: self.as_of.format("%Y-%m-%d").to_string(),
            discount_curve: curve_to_points(&self.discount_curve),
            assets: self.assets.iter().map(AssetQuote::to_file).collect(),
            index: self.index.to_file(),
            composition: self
                .composition
                .entries()
                .iter()
                .map(|(id, w)| WeightFile {
                    id: id.clone(),
                    weight: *w,
                })
                .collect(),
            generator: self.generator.clone(),
        }
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Weights aligned with `assets`; constituents absent from the
    /// composition get weight zero.
    pub fn weights(&self) -> Vec<f64> {
        self.assets
            .iter()
            .map(|a| self.composition.weight_of(&a.id))
            .collect()
    }

    pub fn spots(&self) -> Vec<f64> {
        self.assets.iter().map(|a| a.spot).collect()
    }

    pub fn basket_spot(&self) -> f64 {
        self.assets
            .iter()
            .map(|a| self.composition.weight_of(&a.id) * a.spot)
            .sum()
    }

    pub fn asset_forward(&self, i: usize) -> ForwardCurve {
        let a = &self.assets[i];
        ForwardCurve::with_yield(
            a.spot,
            self.discount_curve.clone(),
            a.dividend_curve.clone(),
        )
    }

    /// Index forward, carried as the weighted basket of constituent forwards.
    pub fn index_forward(&self) -> ForwardCurve {
        let legs = self
            .assets
            .iter()
            .map(|a| BasketLeg {
                weight: self.composition.weight_of(&a.id),
                spot: a.spot,
                dividend: a.dividend_curve.clone(),
            })
            .filter(|l| l.weight > 0.0)
            .collect();
        ForwardCurve::new(
            self.index.spot,
            self.discount_curve.clone(),
            Carry::Basket(legs),
        )
    }

    pub fn asset_call_surface(&self, i: usize) -> Result<CallSurface> {
        CallSurface::new(&self.assets[i].vol_surface, self.asset_forward(i))
    }

    pub fn index_call_surface(&self) -> Result<CallSurface> {
        CallSurface::new(&self.index.vol_surface, self.index_forward())
    }
}

fn curve_from_points(points: &[CurvePoint]) -> Result<RateCurve> {
    RateCurve::new(points.iter().map(|p| (p.t, p.r)).collect())
}

fn curve_to_points(curve: &RateCurve) -> Vec<CurvePoint> {
    curve
        .knots()
        .iter()
        .map(|&(t, r)| CurvePoint { t, r })
        .collect()
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<MarketSnapshot> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: SnapshotFile = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    MarketSnapshot::from_file_data(&file)
}

pub fn save_snapshot(snapshot: &MarketSnapshot, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&snapshot.to_file_data())
        .map_err(|e| Error::Schema(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_asset_json(w1: f64, index_spot: f64) -> String {
        let vols = r#"{"maturities":[1.0],"strikes":[[80,100,120]],"values":[[0.2,0.2,0.2]]}"#;
        format!(
            r#"{{"as_of":"2009-07-31","discount_curve":[{{"t":0,"r":0.01}}],
            "assets":[{{"id":"A","spot":100,"vols":{vols}}},{{"id":"B","spot":100,"vols":{vols}}}],
            "index":{{"id":"IDX","spot":{index_spot},"vols":{vols}}},
            "composition":[{{"id":"A","weight":{w1}}},{{"id":"B","weight":0.5}}]}}"#
        )
    }

    fn parse(s: &str) -> Result<MarketSnapshot> {
        let f: SnapshotFile = serde_json::from_str(s).map_err(|e| Error::Schema(e.to_string()))?;
        MarketSnapshot::from_file_data(&f)
    }

    #[test]
    fn identity_reconciliation() {
        let snap = parse(&two_asset_json(0.5, 100.0)).unwrap();
        assert_eq!(snap.basket_spot(), 100.0);
        assert_eq!(snap.weights(), vec![0.5, 0.5]);
    }

    #[test]
    fn small_mismatch_rescales_weights() {
        let snap = parse(&two_asset_json(0.5, 100.005)).unwrap();
        assert!(((snap.basket_spot() - 100.005) / 100.005).abs() <= 1e-8);
    }

    #[test]
    fn large_mismatch_is_an_error() {
        assert!(matches!(
            parse(&two_asset_json(0.5, 101.0)),
            Err(Error::SpotMismatch { .. })
        ));
    }

    #[test]
    fn negative_weight_is_rejected() {
        assert!(matches!(
            parse(&two_asset_json(-0.1, 100.0)),
            Err(Error::NegativeWeight { .. })
        ));
    }

    #[test]
    fn unknown_fields_are_schema_errors() {
        let s = two_asset_json(0.5, 100.0).replacen("\"as_of\"", "\"bogus\":1,\"as_of\"", 1);
        assert!(matches!(parse(&s), Err(Error::Schema(_))));
    }

    #[test]
    fn unresolved_asset_is_rejected() {
        let s = two_asset_json(0.5, 100.0)
            .replace(r#"{"id":"B","weight":0.5}"#, r#"{"id":"Z","weight":0.5}"#);
        assert!(matches!(parse(&s), Err(Error::UnresolvedAsset(id)) if id == "Z"));
    }

    #[test]
    fn file_round_trip() {
        let snap = parse(&two_asset_json(0.5, 100.0)).unwrap();
        let again = MarketSnapshot::from_file_data(&snap.to_file_data()).unwrap();
        assert_eq!(again.to_file_data(), snap.to_file_data());
    }
}
