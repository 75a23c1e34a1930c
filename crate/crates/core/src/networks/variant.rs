use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Map sizes (at 128x128 input) that may carry a self-attention layer,
/// i.e. the outputs of generator levels 4, 3, 2, 1.
pub const SA_MAP_SIZES: [u32; 4] = [8, 16, 32, 64];

/// Resolution the map-size naming refers to.
pub const REFERENCE_RESOLUTION: u32 = 128;

/// Which ablation variant of the generator to build.
///
/// Levels are numbered from the image side: level 1 is the first encoder
/// output (64x64 at 128 input), level 4 the 8x8 map. Self-attention
/// placement is named by map size at 128x128 input and converted to levels
/// with [`VariantSpec::sa_levels`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub id: String,
    pub auc_levels: BTreeSet<usize>,
    pub sa_maps: BTreeSet<u32>,
    pub symmetric: bool,
}

impl VariantSpec {
    /// Parse a variant id: `M0`..`M3`, `AUC_1`..`AUC_4`, `Feat_<sizes>`
    /// where sizes are separated by `,` or `_` (e.g. `Feat_32,64`).
    pub fn parse(id: &str) -> Result<Self> {
        let all_auc: BTreeSet<usize> = (1..=4).collect();
        let m0_sa: BTreeSet<u32> = [32, 64].into_iter().collect();
        let spec = |auc: BTreeSet<usize>, sa: BTreeSet<u32>, symmetric| Self {
            id: id.to_string(),
            auc_levels: auc,
            sa_maps: sa,
            symmetric,
        };
        match id {
            "M0" => return Ok(spec(all_auc, m0_sa, true)),
            "M1" => return Ok(spec(all_auc, BTreeSet::new(), true)),
            "M2" => return Ok(spec(BTreeSet::new(), m0_sa, true)),
            "M3" => return Ok(spec(all_auc, m0_sa, false)),
            _ => {}
        }
        if let Some(k) = id.strip_prefix("AUC_") {
            let k: usize = k
                .parse()
                .map_err(|_| config_err!("unknown variant `{id}`"))?;
            if !(1..=4).contains(&k) {
                return Err(config_err!("AUC count must be 1..=4, got {k}"));
            }
            return Ok(spec((1..=k).collect(), BTreeSet::new(), true));
        }
        if let Some(sizes) = id.strip_prefix("Feat_") {
            let mut maps = BTreeSet::new();
            for s in sizes.split([',', '_']) {
                let size: u32 = s
                    .trim()
                    .parse()
                    .map_err(|_| config_err!("unknown variant `{id}`"))?;
                if !SA_MAP_SIZES.contains(&size) {
                    return Err(config_err!(
                        "self-attention map size must be one of {SA_MAP_SIZES:?}, got {size}"
                    ));
                }
                if !maps.insert(size) {
                    return Err(config_err!("map size {size} repeated in `{id}`"));
                }
            }
            return Ok(spec(BTreeSet::new(), maps, true));
        }
        Err(config_err!(
            "unknown variant `{id}` (expected M0..M3, AUC_1..AUC_4 or Feat_<sizes>)"
        ))
    }

    /// Generator levels carrying self-attention.
    pub fn sa_levels(&self) -> BTreeSet<usize> {
        self.sa_maps
            .iter()
            .map(|&m| (REFERENCE_RESOLUTION / m).trailing_zeros() as usize)
            .collect()
    }

    /// Structural identity, ignoring the display id.
    pub fn same_graph(&self, other: &VariantSpec) -> bool {
        self.auc_levels == other.auc_levels
            && self.sa_maps == other.sa_maps
            && self.symmetric == other.symmetric
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// Split a comma-separated variant list, keeping `Feat_8,16` together.
pub fn parse_variant_list(list: &str) -> Result<Vec<VariantSpec>> {
    let mut ids: Vec<String> = Vec::new();
    for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let continues_feat = tok.chars().all(|c| c.is_ascii_digit())
            && ids.last().is_some_and(|l| l.starts_with("Feat_"));
        if continues_feat {
            let last = ids.last_mut().expect("checked above");
            last.push(',');
            last.push_str(tok);
        } else {
            ids.push(tok.to_string());
        }
    }
    if ids.is_empty() {
        return Err(config_err!("empty variant list"));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let spec = VariantSpec::parse(&id)?;
        if !seen.insert(spec.id.clone()) {
            return Err(config_err!("variant `{id}` listed more than once"));
        }
        out.push(spec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_grid() {
        let m0 = VariantSpec::parse("M0").unwrap();
        assert_eq!(m0.sa_levels(), [1, 2].into_iter().collect());
        assert_eq!(m0.auc_levels.len(), 4);
        let m2 = VariantSpec::parse("M2").unwrap();
        assert!(m2.auc_levels.is_empty());
        assert!(!VariantSpec::parse("M3").unwrap().symmetric);
        assert!(VariantSpec::parse("AUC_4")
            .unwrap()
            .same_graph(&VariantSpec::parse("M1").unwrap()));
        assert!(VariantSpec::parse("Feat_32,64")
            .unwrap()
            .same_graph(&m2));
        assert_eq!(
            VariantSpec::parse("Feat_8").unwrap().sa_levels(),
            [4].into_iter().collect()
        );
    }

    #[test]
    fn unknown_ids_rejected() {
        for bad in ["M4", "AUC_0", "AUC_5", "Feat_12", "Feat_", "foo", "Feat_8,8"] {
            assert!(matches!(VariantSpec::parse(bad), Err(crate::Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn variant_lists() {
        let v = parse_variant_list("Feat_8,Feat_8,16,Feat_32,64").unwrap();
        let ids: Vec<_> = v.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["Feat_8", "Feat_8,16", "Feat_32,64"]);
        assert!(parse_variant_list("M0,M1,M0").is_err());
        assert_eq!(parse_variant_list("M0,M1,M2,M3").unwrap().len(), 4);
    }
}
