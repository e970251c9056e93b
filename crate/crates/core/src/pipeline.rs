//! End-to-end localization: feature tensors in, support maps, boxes and parts out.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::localization::{
    build_support_map, connected_components, extract_boxes_multi, select_frequent_positions,
    upsample_support, BoundingBox, Keep, Scale, SupportMap,
};
use crate::metrics::normalize_saliency;
use crate::miner::{item_frequencies, FrequencyGrid};
use crate::parts::{locate_parts, PartSpec};
use crate::pgm::GrayMap;
use crate::tensor::{merge_stacks, resize_bilinear, FeatureStack};
use crate::transactions::build_transactions;

/// Picks the configured layers and merges them on the largest grid.
///
/// Smaller grids are resized bilinearly; channels follow the listed order.
pub fn select_layers(stacks: &[FeatureStack], layers: &[String]) -> Result<FeatureStack> {
    let picked = layers
        .iter()
        .map(|name| {
            stacks
                .iter()
                .find(|s| &s.layer_name == name)
                .ok_or_else(|| {
                    let available: Vec<&str> = stacks.iter().map(|s| s.layer_name.as_str()).collect();
                    Error::Argument(format!(
                        "layer `{name}` not found (file has: {})",
                        available.join(", ")
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let canonical = picked
        .iter()
        .max_by_key(|s| s.plane_len())
        .ok_or_else(|| Error::Argument("no layers selected".into()))?;
    let (h, w) = (canonical.height, canonical.width);

    let mut merged: Option<FeatureStack> = None;
    for stack in picked {
        let on_grid = if stack.height == h && stack.width == w {
            stack.clone()
        } else {
            resize_bilinear(stack, h, w)?
        };
        merged = Some(match merged {
            None => on_grid,
            Some(acc) => merge_stacks(&acc, &on_grid)?,
        });
    }
    Ok(merged.expect("at least one layer"))
}

/// Grid-scale result of mining one merged stack.
#[derive(Debug, Clone)]
pub struct GridSupport {
    pub frequencies: FrequencyGrid,
    /// `None` when no position reaches the support threshold.
    pub support: Option<SupportMap>,
}

/// Transactions, singleton frequencies, frequent-position selection and
/// component merging.
pub fn mine_support(stack: &FeatureStack, config: &PipelineConfig) -> Result<GridSupport> {
    let db = build_transactions(stack)?;
    let frequencies = item_frequencies(&db);
    let selected = select_frequent_positions(&frequencies, config.alpha)?;
    let components = connected_components(&selected, config.connectivity);
    let support = match build_support_map(&frequencies, &components, config.keep) {
        Ok(map) => Some(map),
        Err(Error::NoObjectFound) => None,
        Err(e) => return Err(e),
    };
    Ok(GridSupport {
        frequencies,
        support,
    })
}

#[derive(Debug, Clone)]
pub struct Localization {
    pub grid: GridSupport,
    /// Image-scale support; all zeros when nothing was found.
    pub support: SupportMap,
    pub boxes: Vec<BoundingBox>,
}

impl Localization {
    pub fn no_object_found(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn saliency(&self) -> GrayMap {
        normalize_saliency(&self.support)
    }
}

pub fn localize(
    stacks: &[FeatureStack],
    config: &PipelineConfig,
    img_h: usize,
    img_w: usize,
) -> Result<Localization> {
    config.validate()?;
    if img_h == 0 || img_w == 0 {
        return Err(Error::Argument(format!("image size must be at least 1x1, got {img_w}x{img_h}")));
    }
    let stack = select_layers(stacks, &config.layers)?;
    let grid = mine_support(&stack, config)?;
    let support = match &grid.support {
        Some(map) => upsample_support(map, img_h, img_w)?,
        None => SupportMap {
            height: img_h,
            width: img_w,
            values: vec![0.0; img_h * img_w],
            scale: Scale::Image,
        },
    };
    let max_boxes = match config.keep {
        Keep::Largest => Some(config.max_boxes.unwrap_or(1).min(1)),
        Keep::All => config.max_boxes,
    };
    let boxes = extract_boxes_multi(&support, config.connectivity, max_boxes);
    Ok(Localization {
        grid,
        support,
        boxes,
    })
}

/// Parts from a finished localization, sized by its largest box.
pub fn parts_from(localization: &Localization, config: &PipelineConfig) -> Result<Vec<PartSpec>> {
    let object = localization.boxes.first().ok_or_else(|| {
        Error::Infeasible(format!(
            "no support pixels to cluster into k = {} parts",
            config.parts_k
        ))
    })?;
    locate_parts(
        &localization.support,
        object,
        config.parts_k,
        config.lambda,
        config.seed,
        config.support_weight,
    )
}

/// Box output for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub image: String,
    pub boxes: Vec<BoundingBox>,
    #[serde(default)]
    pub no_object_found: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PipelineConfig>,
}

/// Part output for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartsRecord {
    pub image: String,
    pub parts: Vec<PartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PipelineConfig>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_stack(name: &str, c: usize, h: usize, w: usize) -> FeatureStack {
        // Every channel fires on the 2x2 block at rows 1..=2, cols 1..=2.
        let mut data = vec![0.0f32; c * h * w];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = if (1..=2).contains(&y) && (1..=2).contains(&x) { 5.0 } else { 0.5 };
                    data[ch * h * w + y * w + x] = v;
                }
            }
        }
        FeatureStack::new(name, c, h, w, data).unwrap()
    }

    #[test]
    fn missing_layer_is_reported() {
        let s = blob_stack("relu5", 2, 4, 4);
        let err = select_layers(&[s], &["pool5".to_string()]).unwrap_err();
        assert!(err.to_string().contains("pool5"));
    }

    #[test]
    fn smaller_layer_is_resized() {
        let relu = blob_stack("relu5", 2, 8, 8);
        let pool = blob_stack("pool5", 3, 4, 4);
        let merged = select_layers(&[relu, pool], &["pool5".into(), "relu5".into()]).unwrap();
        assert_eq!((merged.channels, merged.height, merged.width), (5, 8, 8));
        assert_eq!(merged.layer_name, "pool5+relu5");
    }

    #[test]
    fn localizes_block() {
        let s = blob_stack("relu5", 4, 6, 6);
        let config = PipelineConfig {
            layers: vec!["relu5".into()],
            ..Default::default()
        };
        let loc = localize(&[s], &config, 60, 60).unwrap();
        assert_eq!(loc.boxes.len(), 1);
        let b = loc.boxes[0];
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (10, 10, 29, 29));
    }

    #[test]
    fn nothing_frequent_means_no_object() {
        let s = FeatureStack::new("relu5", 2, 2, 2, vec![0.0; 8]).unwrap();
        let config = PipelineConfig {
            layers: vec!["relu5".into()],
            ..Default::default()
        };
        let loc = localize(&[s], &config, 8, 8).unwrap();
        assert!(loc.no_object_found());
        assert!(loc.saliency().data.iter().all(|&v| v == 0));
        assert!(matches!(parts_from(&loc, &config), Err(Error::Infeasible(_))));
    }
}
