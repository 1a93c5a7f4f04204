//! Closed-form trainable-parameter counts per block, derived from layer
//! dimensions alone. Serves as the independent oracle for the counts that
//! [`super::ModelBundle::count_parameters`] obtains by walking the actual
//! tensors, and lets the paper preset be sized without allocating it.

use crate::nn::Preset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub aege: usize,
    pub se: usize,
    pub stp: usize,
    pub sts: usize,
    /// The composite conversion architecture (AE/GE + SE + STP + STS).
    pub full_sts: usize,
    pub vocoder: usize,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.full_sts + self.vocoder
    }
}

fn linear(d_in: usize, d_out: usize, bias: bool) -> usize {
    d_in * d_out + if bias { d_out } else { 0 }
}

fn conv(c_in: usize, c_out: usize, k: usize, groups: usize) -> usize {
    c_out * (c_in / groups) * k + c_out
}

fn tconv(c_in: usize, c_out: usize, k: usize) -> usize {
    c_in * c_out * k + c_out
}

fn layer_norm(d: usize) -> usize {
    2 * d
}

fn batch_norm(c: usize) -> usize {
    2 * c // gamma and beta; running stats are buffers, not parameters
}

fn mha(d: usize) -> usize {
    4 * linear(d, d, true)
}

fn feed_forward(d: usize, hidden: usize) -> usize {
    layer_norm(d) + linear(d, hidden, true) + linear(hidden, d, true)
}

fn conformer_block(d: usize, ff_mult: usize, conv_kernel: usize) -> usize {
    let ffn = feed_forward(d, d * ff_mult);
    let conv_module =
        layer_norm(d) + conv(d, 2 * d, 1, 1) + conv(d, d, conv_kernel, d) + conv(d, d, 1, 1);
    2 * ffn + layer_norm(d) + mha(d) + conv_module + layer_norm(d)
}

fn fft_stack(d_model: usize, d_inner: usize, kernel: usize) -> usize {
    mha(d_model)
        + layer_norm(d_model)
        + conv(d_model, d_inner, kernel, 1)
        + conv(d_inner, d_model, kernel, 1)
        + layer_norm(d_model)
}

fn jasper(in_ch: usize, ch: usize, k: usize) -> usize {
    let mut total = 0;
    let mut c_in = in_ch;
    for _ in 0..3 {
        for _ in 0..3 {
            total += conv(c_in, ch, k, 1) + batch_norm(ch);
            c_in = ch;
        }
        // first block projects the skip when channels change
    }
    if in_ch != ch {
        total += conv(in_ch, ch, 1, 1);
    }
    total
}

fn attention_pooling(c_in: usize, hidden: usize, emb: usize, classes: usize) -> usize {
    linear(c_in, hidden, true)
        + linear(hidden, 1, false)
        + layer_norm(2 * c_in)
        + linear(2 * c_in, emb, true)
        + linear(emb, classes, true)
}

fn xvector(c_in: usize, ch: usize, speaker_dim: usize) -> usize {
    conv(c_in, ch, 5, 1)
        + conv(ch, ch, 3, 1)
        + conv(ch, ch, 3, 1)
        + conv(ch, ch, 1, 1)
        + conv(ch, ch, 1, 1)
        + linear(2 * ch, speaker_dim, true)
}

fn subsample(c_in: usize, c_out: usize) -> usize {
    conv(c_in, c_out, 3, 1) + conv(c_out, c_out, 3, 1)
}

fn upsample(c_in: usize, c_out: usize) -> usize {
    tconv(c_in, c_out, 4) + tconv(c_out, c_out, 4)
}

fn condition(e_dim: usize, d: usize) -> usize {
    linear(e_dim, d, true)
}

/// Parameter counts a bundle of this preset will allocate; `conditioned`
/// is false for the ablation variant.
pub fn planned_counts(preset: &Preset, accent_classes: usize, conditioned: bool) -> ParamCounts {
    let p = preset;
    let aege = if conditioned {
        jasper(p.n_mels, p.jasper_channels, p.jasper_kernel)
            + attention_pooling(p.jasper_channels, p.attn_hidden, p.embedding_dim, accent_classes)
            + attention_pooling(p.jasper_channels, p.attn_hidden, p.embedding_dim, 2)
    } else {
        0
    };

    let se = 2 * p.sinc_channels + xvector(p.sinc_channels, p.xvec_channels, p.speaker_dim);

    let mut stp = subsample(p.n_mels, p.conformer_dim)
        + p.conformer_layers * conformer_block(p.conformer_dim, p.conformer_ff_mult, p.conformer_conv_kernel)
        + p.stp_accent_stacks * fft_stack(p.phonetic_dim, p.stp_fft_inner, p.fft_kernel)
        + linear(p.phonetic_dim, p.vocab_size + 1, true);
    if p.conformer_dim != p.phonetic_dim {
        stp += linear(p.conformer_dim, p.phonetic_dim, true);
    }
    if conditioned {
        stp += condition(p.embedding_dim, p.phonetic_dim);
    }

    let d = p.sts_dim;
    let mut sts = upsample(p.phonetic_dim, d)
        + p.sts_encoder_stacks * fft_stack(d, p.sts_inner, p.fft_kernel)
        + fft_stack(d, p.sts_inner, p.fft_kernel) // accent encoder
        + linear(2, d, true) // pitch projection
        + condition(p.speaker_dim, d)
        + fft_stack(d, p.sts_inner, p.fft_kernel) // speaker encoder
        + p.sts_decoder_stacks * fft_stack(d, p.sts_inner, p.fft_kernel)
        + linear(d, p.n_mels, true);
    if conditioned {
        sts += condition(p.embedding_dim, d) + condition(p.embedding_dim, d);
    }

    ParamCounts {
        aege,
        se,
        stp,
        sts,
        full_sts: aege + se + stp + sts,
        vocoder: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelBundle;

    #[test]
    fn plan_matches_allocated_toy_bundle() {
        let bundle = ModelBundle::<f32>::new(Preset::toy(), 4, false, 0);
        let actual = bundle.count_parameters();
        let plan = planned_counts(&Preset::toy(), 4, true);
        assert_eq!(actual, plan);
    }

    #[test]
    fn plan_matches_allocated_ablation_bundle() {
        let bundle = ModelBundle::<f32>::new(Preset::toy(), 4, true, 0);
        let actual = bundle.count_parameters();
        let plan = planned_counts(&Preset::toy(), 4, false);
        assert_eq!(actual, plan);
    }

    #[test]
    fn paper_preset_counts_are_in_the_tens_of_millions() {
        // informational sizing of the published dimensions; no tolerance
        let plan = planned_counts(&Preset::paper(), 40, true);
        assert!(plan.full_sts > 10_000_000);
        assert!(plan.stp > plan.se);
    }
}
