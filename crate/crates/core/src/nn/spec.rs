use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::activation::Activation;
use super::blstm::Blstm;
use super::layers::{validate_offsets, Conv1d, Dense, Tdnn};
use super::stack::Layer;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_TDNN_CONTEXT: [isize; 5] = [-2, -1, 0, 1, 2];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKind {
    Conv1d { filters: usize, kernel: usize },
    /// Framewise affine layer; with a context it consumes a frame splice.
    Dense { units: usize, context: Option<Vec<isize>> },
    Tdnn { units: usize, context: Vec<isize> },
    Blstm { units: usize },
    /// Dense layer whose default activation is the identity.
    Linear { units: usize },
}

/// One layer descriptor. `activation` is an explicit override; without it
/// the stack decides (leaky for hidden layers, identity for output layers).
///
/// Text form: `conv:128x55`, `dense:257`, `dense:771@-1|0|1`, `tdnn:257`,
/// `tdnn:257@-1|0|1`, `blstm:500`, `linear:257`, optionally suffixed with
/// `!linear` or `!leaky`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Option<Activation>,
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: usize) -> Self {
        Self::plain(LayerKind::Conv1d { filters, kernel })
    }

    pub fn dense(units: usize) -> Self {
        Self::plain(LayerKind::Dense { units, context: None })
    }

    pub fn dense_spliced(units: usize, context: &[isize]) -> Self {
        Self::plain(LayerKind::Dense {
            units,
            context: Some(context.to_vec()),
        })
    }

    pub fn tdnn(units: usize) -> Self {
        Self::plain(LayerKind::Tdnn {
            units,
            context: DEFAULT_TDNN_CONTEXT.to_vec(),
        })
    }

    pub fn blstm(units: usize) -> Self {
        Self::plain(LayerKind::Blstm { units })
    }

    pub fn linear(units: usize) -> Self {
        Self::plain(LayerKind::Linear { units })
    }

    fn plain(kind: LayerKind) -> Self {
        Self { kind, activation: None }
    }

    pub fn with_activation(mut self, act: Activation) -> Self {
        self.activation = Some(act);
        self
    }

    pub fn out_dim(&self) -> usize {
        match &self.kind {
            LayerKind::Conv1d { filters, .. } => *filters,
            LayerKind::Dense { units, .. }
            | LayerKind::Tdnn { units, .. }
            | LayerKind::Blstm { units }
            | LayerKind::Linear { units } => *units,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.kind, LayerKind::Blstm { .. })
    }

    pub fn is_conv(&self) -> bool {
        matches!(self.kind, LayerKind::Conv1d { .. })
    }

    /// Checks the descriptor on its own.
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            LayerKind::Conv1d { filters, kernel } => {
                if *filters == 0 || *kernel == 0 {
                    return Err(Error::spec(format!("{self}: filters and kernel must be positive")));
                }
            }
            LayerKind::Blstm { units } if *units < 2 => {
                return Err(Error::spec(format!("{self}: a bidirectional layer needs at least 2 units")));
            }
            LayerKind::Tdnn { context, .. } | LayerKind::Dense { context: Some(context), .. } => {
                validate_offsets(context).map_err(|e| Error::spec(format!("{self}: {e}")))?;
            }
            _ => {}
        }
        if self.out_dim() == 0 {
            return Err(Error::spec(format!("{self}: output size must be positive")));
        }
        if self.is_recurrent() && self.activation.is_some() {
            return Err(Error::spec(format!("{self}: recurrent layers take no activation override")));
        }
        Ok(())
    }

    /// Activation used when the stack places this layer at `is_output`.
    pub fn resolved_activation(&self, is_output: bool) -> Activation {
        match (self.activation, &self.kind) {
            (Some(a), _) => a,
            (None, LayerKind::Linear { .. }) => Activation::Identity,
            (None, _) if is_output => Activation::Identity,
            (None, _) => Activation::LeakyRelu,
        }
    }

    pub fn build<T: Real, R: Rng + ?Sized>(&self, in_dim: usize, act: Activation, rng: &mut R) -> Result<Layer<T>> {
        self.validate()?;
        Ok(match &self.kind {
            LayerKind::Conv1d { filters, kernel } => Layer::Conv1d(Conv1d::new(in_dim, *filters, *kernel, act, rng)?),
            LayerKind::Dense { units, context: None } | LayerKind::Linear { units } => {
                Layer::Dense(Dense::new(in_dim, *units, act, rng)?)
            }
            LayerKind::Dense {
                units,
                context: Some(context),
            }
            | LayerKind::Tdnn { units, context } => Layer::Tdnn(Tdnn::new(in_dim, *units, context, act, rng)?),
            LayerKind::Blstm { units } => Layer::Blstm(Blstm::new(in_dim, *units, rng)?),
        })
    }

    /// Number of trainable scalars for a given input width.
    pub fn param_count(&self, in_dim: usize) -> usize {
        match &self.kind {
            LayerKind::Conv1d { filters, kernel } => filters * in_dim * kernel + filters,
            LayerKind::Dense { units, context: None } | LayerKind::Linear { units } => units * in_dim + units,
            LayerKind::Dense {
                units,
                context: Some(c),
            }
            | LayerKind::Tdnn { units, context: c } => units * in_dim * c.len() + units,
            LayerKind::Blstm { units } => {
                let hf = units.div_ceil(2);
                let hb = units - hf;
                [hf, hb].iter().map(|&h| 4 * h * (in_dim + h + 1)).sum()
            }
        }
    }
}

fn render_context(c: &[isize]) -> String {
    c.iter().map(isize::to_string).collect::<Vec<_>>().join("|")
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LayerKind::Conv1d { filters, kernel } => write!(f, "conv:{filters}x{kernel}")?,
            LayerKind::Dense { units, context } => {
                write!(f, "dense:{units}")?;
                if let Some(c) = context {
                    write!(f, "@{}", render_context(c))?;
                }
            }
            LayerKind::Tdnn { units, context } => {
                write!(f, "tdnn:{units}")?;
                if context[..] != DEFAULT_TDNN_CONTEXT {
                    write!(f, "@{}", render_context(context))?;
                }
            }
            LayerKind::Blstm { units } => write!(f, "blstm:{units}")?,
            LayerKind::Linear { units } => write!(f, "linear:{units}")?,
        }
        if let Some(a) = self.activation {
            write!(f, "!{a}")?;
        }
        Ok(())
    }
}

fn parse_usize(s: &str, item: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::spec(format!("`{item}`: `{s}` is not a size")))
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(item: &str) -> Result<Self> {
        let item = item.trim();
        let (body, act) = match item.split_once('!') {
            Some((b, a)) => (b, Some(a.trim().parse::<Activation>().map_err(|e| Error::spec(format!("`{item}`: {e}")))?)),
            None => (item, None),
        };
        let (kind, rest) = body
            .split_once(':')
            .ok_or_else(|| Error::spec(format!("`{item}`: expected `kind:size`")))?;
        let (size, context) = match rest.split_once('@') {
            Some((s, c)) => {
                let offs = c
                    .split('|')
                    .map(|o| {
                        o.trim()
                            .parse::<isize>()
                            .map_err(|_| Error::spec(format!("`{item}`: bad context offset `{o}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (s, Some(offs))
            }
            None => (rest, None),
        };
        let has_context = context.is_some();
        let kind = match kind.trim().to_ascii_lowercase().as_str() {
            "conv" | "conv1d" => {
                let (f, k) = size
                    .split_once(['x', 'X'])
                    .ok_or_else(|| Error::spec(format!("`{item}`: expected `conv:FILTERSxKERNEL`")))?;
                LayerKind::Conv1d {
                    filters: parse_usize(f, item)?,
                    kernel: parse_usize(k, item)?,
                }
            }
            "dense" => LayerKind::Dense {
                units: parse_usize(size, item)?,
                context,
            },
            "tdnn" => LayerKind::Tdnn {
                units: parse_usize(size, item)?,
                context: context.unwrap_or_else(|| DEFAULT_TDNN_CONTEXT.to_vec()),
            },
            "blstm" => LayerKind::Blstm {
                units: parse_usize(size, item)?,
            },
            "linear" => LayerKind::Linear {
                units: parse_usize(size, item)?,
            },
            other => {
                return Err(Error::spec(format!(
                    "`{item}`: unknown layer kind `{other}` (expected conv, dense, tdnn, blstm or linear)"
                )))
            }
        };
        if has_context && !matches!(kind, LayerKind::Dense { .. } | LayerKind::Tdnn { .. }) {
            return Err(Error::spec(format!("`{item}`: only dense and tdnn layers take a context")));
        }
        let spec = LayerSpec { kind, activation: act };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses a comma-separated layer list; `name*n` repeats an item and an
/// empty string or `none` is the empty stack.
pub fn parse_stack(text: &str) -> Result<Vec<LayerSpec>> {
    let text = text.trim();
    if text.is_empty() || text.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for item in text.split(',') {
        let (body, times) = match item.rsplit_once('*') {
            Some((b, n)) => (b, parse_usize(n, item)?),
            None => (item, 1),
        };
        if times == 0 {
            return Err(Error::spec(format!("`{item}`: repeat count must be positive")));
        }
        let spec: LayerSpec = body.parse()?;
        out.extend(std::iter::repeat_n(spec, times));
    }
    Ok(out)
}

/// Inverse of [`parse_stack`], folding runs of identical layers.
pub fn render_stack(specs: &[LayerSpec]) -> String {
    if specs.is_empty() {
        return "none".to_string();
    }
    let mut parts = Vec::new();
    let mut i = 0;
    while i < specs.len() {
        let run = specs[i..].iter().take_while(|s| **s == specs[i]).count();
        parts.push(if run > 1 {
            format!("{}*{run}", specs[i])
        } else {
            specs[i].to_string()
        });
        i += run;
    }
    parts.join(",")
}
