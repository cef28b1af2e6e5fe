//! Layer-shape tables of standard architectures (weights only; batch-norm
//! parameters and biases are not stored by the accelerator).

use crate::error::{Error, Result};
use crate::space::{Configuration, LayerShape};

pub const MODEL_NAMES: [&str; 5] = [
    "resnet18",
    "resnet20",
    "resnet50",
    "mobilenet_v1",
    "mobilenet_v2",
];

pub fn by_name(name: &str) -> Result<Vec<LayerShape>> {
    match name {
        "resnet18" => Ok(resnet18()),
        "resnet20" => Ok(resnet20()),
        "resnet50" => Ok(resnet50()),
        "mobilenet_v1" => Ok(mobilenet_v1_cifar100()),
        "mobilenet_v2" => Ok(mobilenet_v2()),
        other => Err(Error::config(format!(
            "unknown model `{other}`; expected one of {MODEL_NAMES:?}"
        ))),
    }
}

/// ResNet-18 for 224×224 ImageNet, including the three 1×1 projection shortcuts.
pub fn resnet18() -> Vec<LayerShape> {
    let mut layers = vec![LayerShape::conv("conv1", 3, 64, 7, 112)];
    let mut cin = 64;
    let mut hw = 56;
    for (stage, (cout, stride)) in [(64, 1), (128, 2), (256, 2), (512, 2)]
        .into_iter()
        .enumerate()
    {
        for block in 0..2 {
            let first = block == 0;
            if first && stride == 2 {
                hw /= 2;
            }
            let block_input = layers.len() - 1;
            let prefix = format!("layer{}.{block}", stage + 1);
            layers.push(LayerShape::conv(
                format!("{prefix}.conv1"),
                cin,
                cout,
                3,
                hw,
            ));
            layers.push(LayerShape::conv(
                format!("{prefix}.conv2"),
                cout,
                cout,
                3,
                hw,
            ));
            if first && cin != cout {
                layers.push(
                    LayerShape::conv(format!("{prefix}.downsample"), cin, cout, 1, hw)
                        .with_input_from(block_input),
                );
            }
            cin = cout;
        }
    }
    layers.push(LayerShape::dense("fc", 512, 1000).fixed_width());
    layers
}

/// ResNet-20 for 32×32 CIFAR-10 with parameter-free (zero-padding) shortcuts.
pub fn resnet20() -> Vec<LayerShape> {
    let mut layers = vec![LayerShape::conv("conv1", 3, 16, 3, 32)];
    let mut cin = 16;
    let mut hw = 32;
    for (stage, cout) in [16u64, 32, 64].into_iter().enumerate() {
        for block in 0..3 {
            if block == 0 && cout != cin {
                hw /= 2;
            }
            let prefix = format!("layer{}.{block}", stage + 1);
            layers.push(LayerShape::conv(
                format!("{prefix}.conv1"),
                cin,
                cout,
                3,
                hw,
            ));
            layers.push(LayerShape::conv(
                format!("{prefix}.conv2"),
                cout,
                cout,
                3,
                hw,
            ));
            cin = cout;
        }
    }
    layers.push(LayerShape::dense("fc", 64, 10).fixed_width());
    layers
}

/// ResNet-50 for 224×224 ImageNet (bottleneck blocks, stride on the 3×3 conv).
pub fn resnet50() -> Vec<LayerShape> {
    let mut layers = vec![LayerShape::conv("conv1", 3, 64, 7, 112)];
    let mut cin = 64;
    let mut hw = 56;
    for (stage, (mid, blocks, stride)) in [(64u64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)]
        .into_iter()
        .enumerate()
    {
        let cout = mid * 4;
        for block in 0..blocks {
            let block_input = layers.len() - 1;
            let prefix = format!("layer{}.{block}", stage + 1);
            layers.push(LayerShape::conv(format!("{prefix}.conv1"), cin, mid, 1, hw));
            if block == 0 && stride == 2 {
                hw /= 2;
            }
            layers.push(LayerShape::conv(format!("{prefix}.conv2"), mid, mid, 3, hw));
            layers.push(LayerShape::conv(
                format!("{prefix}.conv3"),
                mid,
                cout,
                1,
                hw,
            ));
            if block == 0 {
                layers.push(
                    LayerShape::conv(format!("{prefix}.downsample"), cin, cout, 1, hw)
                        .with_input_from(block_input),
                );
            }
            cin = cout;
        }
    }
    layers.push(LayerShape::dense("fc", 2048, 1000).fixed_width());
    layers
}

/// MobileNetV2 (width 1.0) for 224×224 ImageNet.
pub fn mobilenet_v2() -> Vec<LayerShape> {
    let mut layers = vec![LayerShape::conv("conv1", 3, 32, 3, 112)];
    let mut cin = 32;
    let mut hw = 112;
    let settings: [(u64, u64, usize, u64); 7] = [
        (1, 16, 1, 1),
        (6, 24, 2, 2),
        (6, 32, 3, 2),
        (6, 64, 4, 2),
        (6, 96, 3, 1),
        (6, 160, 3, 2),
        (6, 320, 1, 1),
    ];
    let mut index = 0;
    for (expand, cout, repeats, stride) in settings {
        for r in 0..repeats {
            let hidden = cin * expand;
            let prefix = format!("block{index}");
            if expand != 1 {
                layers.push(LayerShape::conv(
                    format!("{prefix}.expand"),
                    cin,
                    hidden,
                    1,
                    hw,
                ));
            }
            if r == 0 && stride == 2 {
                hw /= 2;
            }
            layers.push(LayerShape::depthwise(format!("{prefix}.dw"), hidden, 3, hw));
            layers.push(LayerShape::conv(
                format!("{prefix}.project"),
                hidden,
                cout,
                1,
                hw,
            ));
            cin = cout;
            index += 1;
        }
    }
    layers.push(LayerShape::conv("conv_last", 320, 1280, 1, hw));
    layers.push(LayerShape::dense("fc", 1280, 1000).fixed_width());
    layers
}

/// MobileNetV1 for 32×32 CIFAR-100: stem, 13 depthwise-separable pairs and
/// the classifier (28 layers).
pub fn mobilenet_v1_cifar100() -> Vec<LayerShape> {
    let mut layers = vec![LayerShape::conv("conv1", 3, 32, 3, 16)];
    let mut cin = 32;
    let mut hw = 16;
    let pairs: [(u64, u64); 13] = [
        (64, 1),
        (128, 2),
        (128, 1),
        (256, 2),
        (256, 1),
        (512, 2),
        (512, 1),
        (512, 1),
        (512, 1),
        (512, 1),
        (512, 1),
        (1024, 2),
        (1024, 1),
    ];
    for (i, (cout, stride)) in pairs.into_iter().enumerate() {
        if stride == 2 {
            hw = (hw / 2).max(1);
        }
        layers.push(LayerShape::depthwise(format!("sep{i}.dw"), cin, 3, hw));
        layers.push(LayerShape::conv(format!("sep{i}.pw"), cin, cout, 1, hw));
        cin = cout;
    }
    layers.push(LayerShape::dense("fc", 1024, 100).fixed_width());
    layers
}

/// Projection shortcuts: layers that read from an earlier layer than their
/// predecessor.
fn is_projection(layers: &[LayerShape], index: usize) -> bool {
    layers[index].input_from.is_some_and(|src| src + 1 != index)
}

/// Number of layers on the main path (everything but projection shortcuts).
pub fn main_path_len(layers: &[LayerShape]) -> usize {
    (0..layers.len())
        .filter(|&i| !is_projection(layers, i))
        .count()
}

/// Expands a configuration given per main-path layer to all layers: each
/// projection shortcut takes the bit-width and width of the layer listed
/// just before it (the block's last convolution, whose output it is added
/// to). A configuration that already covers every layer is returned as is.
pub fn expand_main_path(layers: &[LayerShape], config: &Configuration) -> Result<Configuration> {
    if config.len() == layers.len() {
        return Ok(config.clone());
    }
    let main = main_path_len(layers);
    if config.len() != main || config.widths.len() != main {
        return Err(Error::input(format!(
            "configuration has {} entries; expected {} (all layers) or {main} (main path)",
            config.len(),
            layers.len()
        )));
    }
    let mut bits = Vec::with_capacity(layers.len());
    let mut widths = Vec::with_capacity(layers.len());
    let mut next = 0;
    for i in 0..layers.len() {
        if is_projection(layers, i) && i > 0 {
            bits.push(bits[i - 1]);
            widths.push(widths[i - 1]);
        } else {
            bits.push(config.bits[next]);
            widths.push(config.widths[next]);
            next += 1;
        }
    }
    Ok(Configuration { bits, widths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::validate_layers;

    #[test]
    fn all_models_validate() {
        for name in MODEL_NAMES {
            validate_layers(&by_name(name).unwrap()).unwrap();
        }
        assert!(by_name("vgg").is_err());
    }

    #[test]
    fn layer_counts() {
        assert_eq!(resnet18().len(), 21);
        assert_eq!(resnet20().len(), 20);
        assert_eq!(mobilenet_v1_cifar100().len(), 28);
        assert_eq!(main_path_len(&resnet18()), 18);
        assert_eq!(main_path_len(&resnet20()), 20);
    }

    #[test]
    fn projections_follow_their_block() {
        let layers = resnet18();
        let main = Configuration {
            bits: (0..18).map(|i| 2 + i % 7).collect(),
            widths: vec![1.0; 18],
        };
        let full = expand_main_path(&layers, &main).unwrap();
        assert_eq!(full.len(), 21);
        for (i, layer) in layers.iter().enumerate() {
            if layer.name.ends_with("downsample") {
                assert_eq!(full.bits[i], full.bits[i - 1]);
            }
        }
        assert!(expand_main_path(&layers, &Configuration::uniform(5, 8, 1.0)).is_err());
    }

    #[test]
    fn weight_totals() {
        let total = |l: Vec<LayerShape>| l.iter().map(LayerShape::weight_count).sum::<u64>();
        assert_eq!(total(resnet18()), 11_678_912);
        assert_eq!(total(resnet20()), 268_336);
        assert_eq!(total(mobilenet_v2()), 3_469_760);
        assert_eq!(total(resnet50()), 25_502_912);
    }
}
