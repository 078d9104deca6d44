//! 3D encoder-decoder architectures for skull/flap prediction.
//!
//! One topology, two variants: a 3D U-Net (decoder blocks concatenate the
//! matching encoder features) and a plain autoencoder (same ladder, no
//! concatenations). Four down-blocks plus a center block; channel ladder
//! 10→20→40→80→160; 5³ convolutions (stride 1, padding 2, batch-norm, ReLU),
//! 2³ max-pooling, 2³ stride-2 transposed convolutions, 50% dropout at block
//! ends, and a final 1×1×1 convolution to 2 class channels.
//!
//! The final convolution output is exposed as logits by default; the class
//! softmax lives inside the loss. An optional `faithful_final_relu` flag
//! applies ReLU to the final convolution instead (which collapses negative
//! logits and is generally not what you want — see `NetConfig`).

mod checkpoint;
pub use checkpoint::Checkpoint;

use serde::{Deserialize, Serialize};
use tch::nn::{self, ConvConfig, ConvTransposeConfig};
use tch::{Device, Kind, Tensor};

use crate::error::{Error, Result};

/// Architecture selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    UNet3d,
    Ae3d,
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Arch::UNet3d => f.write_str("unet3d"),
            Arch::Ae3d => f.write_str("ae3d"),
        }
    }
}

/// Model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub arch: Arch,
    /// First-level channel count; the ladder doubles per level.
    pub base_channels: i64,
    /// Dropout probability at block ends.
    pub dropout: f64,
    /// Apply ReLU to the final 1×1×1 convolution instead of returning raw
    /// logits.
    pub faithful_final_relu: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            arch: Arch::UNet3d,
            base_channels: 10,
            dropout: 0.5,
            faithful_final_relu: false,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels < 1 {
            return Err(Error::InvalidParameter(
                "base_channels must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(
                "dropout must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn unet(&self) -> bool {
        self.arch == Arch::UNet3d
    }
}

/// Input spatial dims must be divisible by this (four 2× poolings).
pub const SPATIAL_DIVISOR: i64 = 16;

struct ConvBlock {
    conv1: nn::Conv3D,
    bn1: nn::BatchNorm,
    conv2: nn::Conv3D,
    bn2: nn::BatchNorm,
    dropout: f64,
}

impl ConvBlock {
    fn new(p: &nn::Path, c_in: i64, c_out: i64, dropout: f64) -> Self {
        let conv_cfg = ConvConfig {
            padding: 2,
            ..Default::default()
        };
        Self {
            conv1: nn::conv3d(p / "conv1", c_in, c_out, 5, conv_cfg),
            bn1: nn::batch_norm3d(p / "bn1", c_out, Default::default()),
            conv2: nn::conv3d(p / "conv2", c_out, c_out, 5, conv_cfg),
            bn2: nn::batch_norm3d(p / "bn2", c_out, Default::default()),
            dropout,
        }
    }

    fn forward(&self, x: &Tensor, train: bool) -> Tensor {
        let x = x.apply(&self.conv1).apply_t(&self.bn1, train).relu();
        let x = x.apply(&self.conv2).apply_t(&self.bn2, train).relu();
        x.dropout(self.dropout, train)
    }
}

/// The assembled model. One instance per thread of control; training owns
/// its model exclusively.
pub struct SkullNet {
    vs: nn::VarStore,
    cfg: NetConfig,
    db1: ConvBlock,
    db2: ConvBlock,
    db3: ConvBlock,
    db4: ConvBlock,
    c5: ConvBlock,
    up6: nn::ConvTranspose3D,
    ub6: ConvBlock,
    up7: nn::ConvTranspose3D,
    ub7: ConvBlock,
    up8: nn::ConvTranspose3D,
    ub8: ConvBlock,
    up9: nn::ConvTranspose3D,
    ub9: ConvBlock,
    head: nn::Conv3D,
}

impl SkullNet {
    /// Build the model with freshly initialized parameters (uniform fan-in
    /// scheme, deterministic for a given seed).
    pub fn new(cfg: &NetConfig, init_seed: u64) -> Result<Self> {
        cfg.validate()?;
        tch::manual_seed(init_seed as i64);
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let b = cfg.base_channels;
        let dp = cfg.dropout;
        let skip = |c: i64| if cfg.unet() { c } else { 0 };

        let up_cfg = ConvTransposeConfig {
            stride: 2,
            ..Default::default()
        };
        let db1 = ConvBlock::new(&(&root / "db1"), 1, b, dp);
        let db2 = ConvBlock::new(&(&root / "db2"), b, 2 * b, dp);
        let db3 = ConvBlock::new(&(&root / "db3"), 2 * b, 4 * b, dp);
        let db4 = ConvBlock::new(&(&root / "db4"), 4 * b, 8 * b, dp);
        let c5 = ConvBlock::new(&(&root / "c5"), 8 * b, 16 * b, dp);
        let up6 = nn::conv_transpose3d(&root / "up6", 16 * b, 16 * b, 2, up_cfg);
        let ub6 = ConvBlock::new(&(&root / "ub6"), 16 * b + skip(8 * b), 8 * b, dp);
        let up7 = nn::conv_transpose3d(&root / "up7", 8 * b, 8 * b, 2, up_cfg);
        let ub7 = ConvBlock::new(&(&root / "ub7"), 8 * b + skip(4 * b), 4 * b, dp);
        let up8 = nn::conv_transpose3d(&root / "up8", 4 * b, 4 * b, 2, up_cfg);
        let ub8 = ConvBlock::new(&(&root / "ub8"), 4 * b + skip(2 * b), 2 * b, dp);
        let up9 = nn::conv_transpose3d(&root / "up9", 2 * b, 2 * b, 2, up_cfg);
        let ub9 = ConvBlock::new(&(&root / "ub9"), 2 * b + skip(b), b, dp);
        let head = nn::conv3d(&root / "head", b, 2, 1, Default::default());

        Ok(Self {
            vs,
            cfg: cfg.clone(),
            db1,
            db2,
            db3,
            db4,
            c5,
            up6,
            ub6,
            up7,
            ub7,
            up8,
            ub8,
            up9,
            ub9,
            head,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn var_store(&self) -> &nn::VarStore {
        &self.vs
    }

    /// Learnable parameter count (conv/transposed-conv weights and biases,
    /// batch-norm scales and shifts; running statistics are buffers, not
    /// parameters).
    pub fn parameter_count(&self) -> i64 {
        self.vs
            .trainable_variables()
            .iter()
            .map(|t| t.numel() as i64)
            .sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let size = x.size();
        if size.len() != 5 || size[1] != 1 {
            return Err(Error::InvalidParameter(format!(
                "expected input of shape (N, 1, D, H, W), got {size:?}"
            )));
        }
        for (axis, &len) in size[2..].iter().enumerate() {
            if len % SPATIAL_DIVISOR != 0 {
                return Err(Error::NetInputShape {
                    axis,
                    len: len as usize,
                    divisor: SPATIAL_DIVISOR as usize,
                });
            }
        }
        Ok(())
    }

    /// Forward pass: `(N, 1, D, H, W)` → logits `(N, 2, D, H, W)`.
    /// Spatial dims must be divisible by 16. `train` enables dropout and
    /// batch-norm batch statistics.
    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.check_input(x)?;
        let pool = |t: &Tensor| t.max_pool3d(2, 2, 0, 1, false);
        let cat = |up: Tensor, skip: &Tensor| -> Tensor {
            if self.cfg.unet() {
                Tensor::cat(&[up, skip.shallow_clone()], 1)
            } else {
                up
            }
        };

        let d1 = self.db1.forward(x, train);
        let d2 = self.db2.forward(&pool(&d1), train);
        let d3 = self.db3.forward(&pool(&d2), train);
        let d4 = self.db4.forward(&pool(&d3), train);
        let c = self.c5.forward(&pool(&d4), train);

        let u = self.ub6.forward(&cat(c.apply(&self.up6), &d4), train);
        let u = self.ub7.forward(&cat(u.apply(&self.up7), &d3), train);
        let u = self.ub8.forward(&cat(u.apply(&self.up8), &d2), train);
        let u = self.ub9.forward(&cat(u.apply(&self.up9), &d1), train);
        let logits = u.apply(&self.head);
        Ok(if self.cfg.faithful_final_relu {
            logits.relu()
        } else {
            logits
        })
    }

    /// Foreground mask from the argmax class of a forward pass (inference
    /// mode, no dropout).
    pub fn predict_foreground(&self, x: &Tensor) -> Result<Tensor> {
        let logits = tch::no_grad(|| self.forward(x, false))?;
        Ok(logits.argmax(1, false).to_kind(Kind::Uint8))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent per-layer arithmetic over the architecture table:
    /// conv k³·cin·cout + cout, transposed conv k³·cin·cout + cout,
    /// batch-norm 2·c. Decoder conv inputs gain the concatenated encoder
    /// channels in the U-Net variant.
    fn expected_parameter_count(unet: bool) -> i64 {
        let b = 10i64;
        let conv = |k: i64, cin: i64, cout: i64| k * k * k * cin * cout + cout;
        let bn = |c: i64| 2 * c;
        let block = |cin: i64, cout: i64| {
            conv(5, cin, cout) + bn(cout) + conv(5, cout, cout) + bn(cout)
        };
        let skip = |c: i64| if unet { c } else { 0 };
        let mut total = 0;
        // Encoder: DB1..DB4, C5.
        total += block(1, b);
        total += block(b, 2 * b);
        total += block(2 * b, 4 * b);
        total += block(4 * b, 8 * b);
        total += block(8 * b, 16 * b);
        // Decoder: UB6..UB9 with 2³ transposed convs.
        total += conv(2, 16 * b, 16 * b) + block(16 * b + skip(8 * b), 8 * b);
        total += conv(2, 8 * b, 8 * b) + block(8 * b + skip(4 * b), 4 * b);
        total += conv(2, 4 * b, 4 * b) + block(4 * b + skip(2 * b), 2 * b);
        total += conv(2, 2 * b, 2 * b) + block(2 * b + skip(b), b);
        // Final 1³ conv to 2 classes.
        total += conv(1, b, 2);
        total
    }

    #[test]
    fn unet_parameter_count_matches_layer_arithmetic() {
        let net = SkullNet::new(&NetConfig::default(), 0).unwrap();
        assert_eq!(net.parameter_count(), expected_parameter_count(true));
        assert_eq!(net.parameter_count(), 10_913_832);
    }

    #[test]
    fn ae_parameter_count_matches_and_is_smaller() {
        let cfg = NetConfig {
            arch: Arch::Ae3d,
            ..Default::default()
        };
        let net = SkullNet::new(&cfg, 0).unwrap();
        assert_eq!(net.parameter_count(), expected_parameter_count(false));
        assert_eq!(net.parameter_count(), 9_851_332);
        let unet = SkullNet::new(&NetConfig::default(), 0).unwrap();
        assert!(net.parameter_count() < unet.parameter_count());
    }

    #[test]
    fn forward_preserves_spatial_dims_with_two_channels() {
        for arch in [Arch::UNet3d, Arch::Ae3d] {
            let cfg = NetConfig {
                arch,
                ..Default::default()
            };
            let net = SkullNet::new(&cfg, 1).unwrap();
            let x = Tensor::zeros([1, 1, 32, 32, 32], (Kind::Float, Device::Cpu));
            let y = net.forward(&x, false).unwrap();
            assert_eq!(y.size(), vec![1, 2, 32, 32, 32], "{arch}");
        }
    }

    #[test]
    fn indivisible_dims_name_the_offending_axis() {
        let net = SkullNet::new(&NetConfig::default(), 1).unwrap();
        let x = Tensor::zeros([1, 1, 32, 50, 32], (Kind::Float, Device::Cpu));
        match net.forward(&x, false) {
            Err(Error::NetInputShape { axis: 1, len: 50, .. }) => {}
            other => panic!("expected NetInputShape on axis 1, got {other:?}"),
        }
    }

    #[test]
    fn inference_is_deterministic_with_dropout_disabled() {
        let net = SkullNet::new(&NetConfig::default(), 2).unwrap();
        let x = Tensor::rand([1, 1, 32, 32, 32], (Kind::Float, Device::Cpu));
        let a = net.forward(&x, false).unwrap();
        let b = net.forward(&x, false).unwrap();
        let max_diff = f64::try_from((&a - &b).abs().max()).unwrap();
        assert!(max_diff <= 1e-6, "non-deterministic forward: {max_diff}");
    }

    #[test]
    fn zeroed_parameters_give_zero_logits() {
        let net = SkullNet::new(&NetConfig::default(), 3).unwrap();
        tch::no_grad(|| {
            for (_, mut t) in net.var_store().variables() {
                let _ = t.zero_();
            }
        });
        let x = Tensor::rand([1, 1, 32, 32, 32], (Kind::Float, Device::Cpu));
        let y = net.forward(&x, false).unwrap();
        let max_abs = f64::try_from(y.abs().max()).unwrap();
        assert_eq!(max_abs, 0.0);
    }

    #[test]
    fn initialization_is_seed_deterministic() {
        let a = SkullNet::new(&NetConfig::default(), 7).unwrap();
        let b = SkullNet::new(&NetConfig::default(), 7).unwrap();
        let va = a.vs.variables();
        for (name, tb) in b.vs.variables() {
            let ta = &va[&name];
            assert_eq!(
                f64::try_from((ta - &tb).abs().max()).unwrap(),
                0.0,
                "{name} differs"
            );
        }
    }
}
