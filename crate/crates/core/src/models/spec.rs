use std::fmt;
use std::str::FromStr;

use crate::corpus::Sensor;
use crate::error::{Error, Result};
use crate::nn::{parse_stack, render_stack, LayerSpec};
use crate::signal::StftParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Backbone {
    /// Waveform-to-waveform fully convolutional network.
    Fcn,
    Tdnn,
    Blstm,
}

impl Backbone {
    pub const ALL: [Backbone; 3] = [Backbone::Fcn, Backbone::Tdnn, Backbone::Blstm];

    pub fn is_spectral(self) -> bool {
        self != Backbone::Fcn
    }

    /// Width of the audio input: one waveform channel or one magnitude per bin.
    pub fn audio_dim(self) -> usize {
        if self.is_spectral() {
            StftParams::default().bin_count()
        } else {
            1
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Fcn => "fcn",
            Backbone::Tdnn => "tdnn",
            Backbone::Blstm => "blstm",
        })
    }
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fcn" => Ok(Backbone::Fcn),
            "tdnn" => Ok(Backbone::Tdnn),
            "blstm" => Ok(Backbone::Blstm),
            other => Err(Error::spec(format!("unknown backbone `{other}` (expected fcn, tdnn or blstm)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FusionStrategy {
    AudioOnly,
    /// `v = Concat(s, e)`.
    DirectConcat,
    /// `v = Concat(s, E_e(e))`.
    UnilateralEncoding,
    /// `v = Concat(E_s(s), E_e(e))`.
    BilateralEncoding,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 4] = [
        FusionStrategy::AudioOnly,
        FusionStrategy::DirectConcat,
        FusionStrategy::UnilateralEncoding,
        FusionStrategy::BilateralEncoding,
    ];

    pub fn uses_emma(self) -> bool {
        self != FusionStrategy::AudioOnly
    }
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionStrategy::AudioOnly => "audio_only",
            FusionStrategy::DirectConcat => "direct",
            FusionStrategy::UnilateralEncoding => "unilateral",
            FusionStrategy::BilateralEncoding => "bilateral",
        })
    }
}

impl FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "audio_only" | "audio" => Ok(FusionStrategy::AudioOnly),
            "direct" | "direct_concat" => Ok(FusionStrategy::DirectConcat),
            "unilateral" => Ok(FusionStrategy::UnilateralEncoding),
            "bilateral" => Ok(FusionStrategy::BilateralEncoding),
            other => Err(Error::spec(format!(
                "unknown fusion `{other}` (expected audio_only, direct, unilateral or bilateral)"
            ))),
        }
    }
}

/// Backbone, fusion strategy and the three layer stacks of one system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub backbone: Backbone,
    pub fusion: FusionStrategy,
    pub audio_encoder: Vec<LayerSpec>,
    pub emma_encoder: Vec<LayerSpec>,
    pub se_network: Vec<LayerSpec>,
    pub sensors: Vec<Sensor>,
}

/// Channel widths found by the symbolic shape pass. `axis` names the time
/// axis: `T` for waveform samples, `F` for STFT frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeReport {
    pub axis: char,
    pub audio_in: usize,
    pub emma_in: usize,
    pub audio_repr: usize,
    pub emma_repr: usize,
    pub fused: usize,
    pub output: usize,
}

impl fmt::Display for ShapeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "audio {a}x{t} + emma {e}x{t} -> fused {v}x{t} -> output {o}x{t}",
            a = self.audio_repr,
            e = self.emma_repr,
            v = self.fused,
            o = self.output,
            t = self.axis
        )
    }
}

fn stack(text: &str) -> Vec<LayerSpec> {
    parse_stack(text).expect("built-in stack")
}

impl ModelSpec {
    /// The default architecture for a backbone and fusion strategy.
    pub fn default_for(backbone: Backbone, fusion: FusionStrategy) -> Self {
        use Backbone::*;
        use FusionStrategy::*;
        let (audio, emma, se) = match (backbone, fusion) {
            (Fcn, AudioOnly | DirectConcat) => ("", "", "conv:128x55*7,conv:1x55"),
            (Fcn, UnilateralEncoding) => ("", "conv:128x256,conv:128x128,conv:1x55", "conv:128x55*4,conv:1x55"),
            (Fcn, BilateralEncoding) => (
                "conv:128x55*2,conv:18x55",
                "conv:128x128*2,conv:18x64",
                "conv:128x55*4,conv:1x55",
            ),
            (Tdnn, AudioOnly | DirectConcat) => ("", "", "tdnn:257*3,dense:771@-1|0|1,dense:257,tdnn:257*4"),
            (Tdnn, UnilateralEncoding) => ("", "tdnn:18*2", "tdnn:257*2,dense:771@-1|0|1,dense:257,tdnn:257*4"),
            (Tdnn, BilateralEncoding) => (
                "tdnn:257",
                "tdnn:18*2",
                "tdnn:257*2,dense:771@-1|0|1,dense:257,tdnn:257*3",
            ),
            (Blstm, AudioOnly | DirectConcat) => ("", "", "blstm:500*3,dense:257"),
            (Blstm, UnilateralEncoding) => ("", "blstm:36*3,dense:36*2", "blstm:514*2,blstm:257,dense:257"),
            (Blstm, BilateralEncoding) => ("blstm:257,linear:257", "blstm:18*4,dense:18", "blstm:514*2,blstm:257,dense:257"),
        };
        Self {
            backbone,
            fusion,
            audio_encoder: stack(audio),
            emma_encoder: stack(emma),
            se_network: stack(se),
            sensors: Sensor::ALL.to_vec(),
        }
    }

    /// All twelve default systems, backbone-major.
    pub fn all_defaults() -> Vec<Self> {
        Backbone::ALL
            .iter()
            .flat_map(|&b| FusionStrategy::ALL.iter().map(move |&f| Self::default_for(b, f)))
            .collect()
    }

    /// A short name such as `blstm-direct`.
    pub fn name(&self) -> String {
        format!("{}-{}", self.backbone, self.fusion)
    }

    pub fn emma_dim(&self) -> usize {
        if self.fusion.uses_emma() {
            2 * self.sensors.len()
        } else {
            0
        }
    }

    fn check_stack(&self, which: &str, specs: &[LayerSpec]) -> Result<()> {
        for (i, s) in specs.iter().enumerate() {
            let name = || format!("{which} layer {} ({s})", i + 1);
            s.validate().map_err(|e| e.context(&name()))?;
            if self.backbone == Backbone::Fcn && !s.is_conv() {
                return Err(Error::spec(format!("{}: waveform models take convolution layers only", name())));
            }
        }
        Ok(())
    }

    /// Checks the stacks against the fusion strategy and propagates channel
    /// widths through encoders, fusion and SE network.
    pub fn shape_check(&self) -> Result<ShapeReport> {
        use FusionStrategy::*;
        let need = |cond: bool, msg: &str| if cond { Ok(()) } else { Err(Error::spec(format!("{}: {msg}", self.name()))) };
        match self.fusion {
            AudioOnly | DirectConcat => {
                need(self.audio_encoder.is_empty(), "this fusion strategy takes no audio encoder")?;
                need(self.emma_encoder.is_empty(), "this fusion strategy takes no EMMA encoder")?;
            }
            UnilateralEncoding => {
                need(self.audio_encoder.is_empty(), "unilateral encoding takes no audio encoder")?;
                need(!self.emma_encoder.is_empty(), "unilateral encoding needs an EMMA encoder")?;
            }
            BilateralEncoding => {
                need(!self.audio_encoder.is_empty(), "bilateral encoding needs an audio encoder")?;
                need(!self.emma_encoder.is_empty(), "bilateral encoding needs an EMMA encoder")?;
            }
        }
        need(!self.se_network.is_empty(), "the SE network is empty")?;
        if self.fusion.uses_emma() {
            need(!self.sensors.is_empty(), "no sensors selected")?;
        }
        self.check_stack("audio_encoder", &self.audio_encoder)?;
        self.check_stack("emma_encoder", &self.emma_encoder)?;
        self.check_stack("se_network", &self.se_network)?;

        let audio_in = self.backbone.audio_dim();
        let emma_in = self.emma_dim();
        let audio_repr = self.audio_encoder.last().map_or(audio_in, LayerSpec::out_dim);
        let emma_repr = self.emma_encoder.last().map_or(emma_in, LayerSpec::out_dim);
        let fused = audio_repr + emma_repr;
        let output = self.se_network.last().map_or(fused, LayerSpec::out_dim);
        if output != audio_in {
            let n = self.se_network.len();
            return Err(Error::spec(format!(
                "{}: se_network layer {n} ({}) emits {output} channels but the target has {audio_in}",
                self.name(),
                self.se_network[n - 1]
            )));
        }
        Ok(ShapeReport {
            axis: if self.backbone.is_spectral() { 'F' } else { 'T' },
            audio_in,
            emma_in,
            audio_repr,
            emma_repr,
            fused,
            output,
        })
    }

    /// Total trainable scalars implied by the stacks.
    pub fn param_count(&self) -> Result<usize> {
        let r = self.shape_check()?;
        let count = |specs: &[LayerSpec], mut dim: usize| {
            specs
                .iter()
                .map(|s| {
                    let n = s.param_count(dim);
                    dim = s.out_dim();
                    n
                })
                .sum::<usize>()
        };
        Ok(count(&self.audio_encoder, r.audio_in) + count(&self.emma_encoder, r.emma_in) + count(&self.se_network, r.fused))
    }

    /// `key=value` lines; the stacks use the layer text syntax.
    pub fn render(&self) -> String {
        format!(
            "backbone={}\nfusion={}\naudio_encoder={}\nemma_encoder={}\nse_network={}\nsensors={}\n",
            self.backbone,
            self.fusion,
            render_stack(&self.audio_encoder),
            render_stack(&self.emma_encoder),
            render_stack(&self.se_network),
            Sensor::join(&self.sensors)
        )
    }

    /// Parses a spec file. `backbone` and `fusion` are required; omitted
    /// stacks take the defaults for that pair and omitted sensors mean all nine.
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields: Vec<(String, String)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::spec(format!("line {}: expected key=value", i + 1)))?;
            let k = k.trim().to_string();
            if fields.iter().any(|(x, _)| *x == k) {
                return Err(Error::spec(format!("line {}: duplicate key `{k}`", i + 1)));
            }
            fields.push((k, v.trim().to_string()));
        }
        let get = |k: &str| fields.iter().find(|(x, _)| x == k).map(|(_, v)| v.as_str());
        for (k, _) in &fields {
            if !["backbone", "fusion", "audio_encoder", "emma_encoder", "se_network", "sensors"].contains(&k.as_str()) {
                return Err(Error::spec(format!("unknown key `{k}`")));
            }
        }
        let backbone: Backbone = get("backbone").ok_or_else(|| Error::spec("missing `backbone`"))?.parse()?;
        let fusion: FusionStrategy = get("fusion").ok_or_else(|| Error::spec("missing `fusion`"))?.parse()?;
        let mut spec = Self::default_for(backbone, fusion);
        if let Some(v) = get("audio_encoder") {
            spec.audio_encoder = parse_stack(v).map_err(|e| e.context("audio_encoder"))?;
        }
        if let Some(v) = get("emma_encoder") {
            spec.emma_encoder = parse_stack(v).map_err(|e| e.context("emma_encoder"))?;
        }
        if let Some(v) = get("se_network") {
            spec.se_network = parse_stack(v).map_err(|e| e.context("se_network"))?;
        }
        if let Some(v) = get("sensors") {
            spec.sensors = Sensor::parse_list(v).map_err(|e| Error::spec(e.to_string()))?;
        }
        spec.shape_check()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_defaults_pass_the_shape_check() {
        for s in ModelSpec::all_defaults() {
            let r = s.shape_check().unwrap();
            assert_eq!(r.output, r.audio_in, "{}", s.name());
        }
    }

    #[test]
    fn fused_widths() {
        let w = |b, f| ModelSpec::default_for(b, f).shape_check().unwrap().fused;
        assert_eq!(w(Backbone::Fcn, FusionStrategy::AudioOnly), 1);
        assert_eq!(w(Backbone::Fcn, FusionStrategy::DirectConcat), 19);
        assert_eq!(w(Backbone::Fcn, FusionStrategy::UnilateralEncoding), 2);
        assert_eq!(w(Backbone::Fcn, FusionStrategy::BilateralEncoding), 36);
        assert_eq!(w(Backbone::Tdnn, FusionStrategy::DirectConcat), 275);
        assert_eq!(w(Backbone::Tdnn, FusionStrategy::UnilateralEncoding), 275);
        assert_eq!(w(Backbone::Tdnn, FusionStrategy::BilateralEncoding), 275);
        assert_eq!(w(Backbone::Blstm, FusionStrategy::UnilateralEncoding), 293);
        assert_eq!(w(Backbone::Blstm, FusionStrategy::BilateralEncoding), 275);
    }

    #[test]
    fn encoder_invariants_are_enforced() {
        let mut s = ModelSpec::default_for(Backbone::Blstm, FusionStrategy::AudioOnly);
        s.emma_encoder = parse_stack("dense:4").unwrap();
        assert!(matches!(s.shape_check(), Err(Error::Spec(_))));
        let mut s = ModelSpec::default_for(Backbone::Tdnn, FusionStrategy::UnilateralEncoding);
        s.emma_encoder.clear();
        assert!(matches!(s.shape_check(), Err(Error::Spec(_))));
        let mut s = ModelSpec::default_for(Backbone::Fcn, FusionStrategy::BilateralEncoding);
        s.audio_encoder.clear();
        assert!(matches!(s.shape_check(), Err(Error::Spec(_))));
    }

    #[test]
    fn output_mismatch_names_the_layer() {
        let mut s = ModelSpec::default_for(Backbone::Blstm, FusionStrategy::DirectConcat);
        s.se_network = parse_stack("blstm:8,dense:256").unwrap();
        let e = s.shape_check().unwrap_err().to_string();
        assert!(e.contains("se_network layer 2 (dense:256)"), "{e}");
    }

    #[test]
    fn fcn_rejects_framewise_layers() {
        let mut s = ModelSpec::default_for(Backbone::Fcn, FusionStrategy::AudioOnly);
        s.se_network = parse_stack("dense:1").unwrap();
        assert!(s.shape_check().is_err());
    }

    #[test]
    fn text_round_trip() {
        for s in ModelSpec::all_defaults() {
            assert_eq!(ModelSpec::parse(&s.render()).unwrap(), s);
        }
        let s = ModelSpec::parse(
            "backbone=blstm\nfusion=unilateral\nemma_encoder=blstm:36,blstm:36,blstm:36,dense:36,dense:36\nsensors=UL,LL,LJ,T1\n",
        )
        .unwrap();
        assert_eq!(s.emma_dim(), 8);
        assert_eq!(s.emma_encoder.len(), 5);
    }

    #[test]
    fn parse_errors() {
        assert!(ModelSpec::parse("fusion=direct").is_err());
        assert!(ModelSpec::parse("backbone=fcn\nfusion=direct\ncolour=red").is_err());
        assert!(ModelSpec::parse("backbone=fcn\nfusion=direct\nsensors=UL,XX").is_err());
        assert!(ModelSpec::parse("backbone=fcn\nbackbone=fcn\nfusion=direct").is_err());
    }
}
