mod features;
mod wav;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mscodec_core::bitstream::{self, BitstreamHeader};
use mscodec_core::metrics::{self, SpectralConfig};
use mscodec_core::msrvq::{self, codebook_usage, train_codebooks_ema, EmaOptions, LevelConfig};
use mscodec_core::{AudioBuffer, Codec, CodecConfig, ModelError, NoiseMode, Preset};

#[derive(Parser)]
#[command(name = "mscodec", version, about = "Multi-scale neural audio codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a mono WAV file into a token stream.
    Encode {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Decode a token stream into a mono 32-bit float WAV file.
    Decode {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Decoder noise: `off` or an integer seed.
        #[arg(long, default_value = "off", value_parser = parse_noise)]
        noise: NoiseMode,
    },
    /// Print the header, token rates and bitrate of a token stream.
    Inspect { input: PathBuf },
    /// Compare two mono WAV files of equal length and rate.
    Metrics {
        reference: PathBuf,
        estimate: PathBuf,
        #[arg(
            long = "set",
            value_enum,
            value_delimiter = ',',
            default_value = "sisdr,mel,stft"
        )]
        set: Vec<Metric>,
        /// Scale each signal to unit peak amplitude first.
        #[arg(long)]
        peak_normalize: bool,
    },
    /// Write the encoder's continuous latents as a features file.
    Latents {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Learn quantizer codebooks from latent features and write a weight file.
    TrainCodebooks {
        features: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        /// Frames sampled per iteration; all frames when omitted.
        #[arg(long)]
        batch_size: Option<usize>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Named configuration: general-44k, general-32k, speech-24k or
    /// ablation-single-scale.
    #[arg(long, conflicts_with = "weights")]
    preset: Option<Preset>,
    /// Weight file; its embedded config is used.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Seed for random weight initialisation (and codebook training).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, conflicts_with = "weights")]
    base_channels: Option<usize>,
    #[arg(long, conflicts_with = "weights")]
    codebook_size: Option<usize>,
    #[arg(long, conflicts_with = "weights")]
    codeword_dim: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Sisdr,
    Mel,
    Stft,
}

/// A failed command and the exit status it maps to.
enum Failure {
    /// Bad input or invocation: exit 2.
    User(anyhow::Error),
    /// Anything else: exit 1.
    Internal(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Internal(e.into())
    }
}

trait UserContext<T> {
    fn user(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UserContext<T> for Result<T, E> {
    fn user(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::User(e.into()))
    }
}

fn user_error(msg: impl Display) -> Failure {
    Failure::User(anyhow!("{msg}"))
}

/// Model errors caused by the caller's data or files rather than a bug.
fn classify(e: ModelError) -> Failure {
    match e {
        ModelError::Tensor(_) | ModelError::Quantize(_) => Failure::Internal(e.into()),
        _ => Failure::User(e.into()),
    }
}

fn parse_noise(s: &str) -> Result<NoiseMode, String> {
    if s == "off" {
        return Ok(NoiseMode::Off);
    }
    s.parse()
        .map(NoiseMode::Seeded)
        .map_err(|_| format!("expected `off` or an integer seed, got `{s}`"))
}

impl ModelArgs {
    fn config(&self, fallback: Option<Preset>) -> Result<CodecConfig, Failure> {
        let preset = self
            .preset
            .or(fallback)
            .ok_or_else(|| user_error("pass --preset or --weights"))?;
        let mut cfg = preset.config();
        if let Some(c) = self.base_channels {
            cfg.base_channels = c;
        }
        if let Some(k) = self.codebook_size {
            cfg.codebook_size = k;
        }
        if let Some(d) = self.codeword_dim {
            cfg.codeword_dim = d;
        }
        cfg.validate().map_err(classify)?;
        Ok(cfg)
    }

    fn codec(&self, fallback: Option<Preset>) -> Result<Codec, Failure> {
        match &self.weights {
            Some(path) => Codec::load_weights(path)
                .map_err(|e| user_error(format!("cannot load weights {}: {e}", path.display()))),
            None => Codec::random(self.config(fallback)?, self.seed).map_err(classify),
        }
    }
}

fn print_kv(key: &str, value: impl Display) {
    println!("{key}={value}");
}

fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn read_wav(path: &Path) -> Result<AudioBuffer, Failure> {
    wav::read(path).user()
}

fn encode(input: &Path, output: &Path, model: &ModelArgs) -> Result<(), Failure> {
    let audio = read_wav(input)?;
    let codec = model.codec(None)?;
    let cfg = codec.config();
    if audio.sample_rate != cfg.sample_rate {
        return Err(user_error(format!(
            "{}: sample rate {} Hz, expected {} Hz (no resampling is done)",
            input.display(),
            audio.sample_rate,
            cfg.sample_rate
        )));
    }
    let codes = codec.encode(&audio).map_err(classify)?;
    let header = BitstreamHeader::new(cfg, codes.frames, audio.len());
    let bytes = bitstream::pack(&codes, &header)?;
    std::fs::write(output, &bytes)
        .map_err(|e| user_error(format!("cannot write {}: {e}", output.display())))?;

    let bps = header.bitrate();
    print_kv("frames", codes.frames);
    print_kv("level_lengths", join(&codes.level_lengths()));
    print_kv("original_samples", audio.len());
    print_kv("bitrate_bps", bps);
    print_kv("bytes", bytes.len());
    eprintln!(
        "encoded {:.2} s into {} tokens over {} levels at {}",
        audio.duration_secs(),
        codes.total_tokens(),
        codes.levels.len(),
        bitstream::format_bitrate(bps)
    );
    Ok(())
}

fn latents(input: &Path, output: &Path, model: &ModelArgs) -> Result<(), Failure> {
    let audio = read_wav(input)?;
    let codec = model.codec(None)?;
    let latent = codec.encode_latent(&audio).map_err(classify)?;
    std::fs::write(output, features::encode(&latent))
        .map_err(|e| user_error(format!("cannot write {}: {e}", output.display())))?;
    print_kv("frames", latent.frames());
    print_kv("channels", latent.channels());
    eprintln!(
        "wrote {} x {} latent frames",
        latent.frames(),
        latent.channels()
    );
    Ok(())
}

fn decode(input: &Path, output: &Path, model: &ModelArgs, noise: NoiseMode) -> Result<(), Failure> {
    let bytes = std::fs::read(input)
        .map_err(|e| user_error(format!("cannot read {}: {e}", input.display())))?;
    let (codes, header) =
        bitstream::unpack(&bytes).map_err(|e| user_error(format!("{}: {e}", input.display())))?;
    if model.weights.is_none() && model.preset.is_none() && header.preset().is_none() {
        return Err(user_error(
            "stream was encoded with a custom config; pass --weights or --preset with overrides",
        ));
    }
    let codec = model.codec(header.preset())?;
    if codec.config().fingerprint() != header.config_hash {
        return Err(user_error(format!(
            "config mismatch: stream was encoded with config {:#018x}, codec has {:#018x}",
            header.config_hash,
            codec.config().fingerprint()
        )));
    }
    let mut audio = codec.decode(&codes, noise).map_err(classify)?;
    audio.truncate(header.original_sample_count as usize);
    wav::write(output, &audio).user()?;

    print_kv("samples", audio.len());
    print_kv("sample_rate", audio.sample_rate);
    eprintln!(
        "decoded {} samples ({:.2} s)",
        audio.len(),
        audio.duration_secs()
    );
    Ok(())
}

fn inspect(input: &Path) -> Result<(), Failure> {
    let bytes = std::fs::read(input)
        .map_err(|e| user_error(format!("cannot read {}: {e}", input.display())))?;
    let (_, h) =
        bitstream::unpack(&bytes).map_err(|e| user_error(format!("{}: {e}", input.display())))?;
    let rates = h.token_rates();
    let rounded: Vec<i64> = rates.iter().map(|r| r.round() as i64).collect();
    let bps = h.bitrate();
    print_kv("version", bitstream::VERSION);
    print_kv("preset", h.preset().map_or("custom", Preset::name));
    print_kv("config_hash", format!("{:#018x}", h.config_hash));
    print_kv("sample_rate", h.sample_rate);
    print_kv("hop_length", h.hop_length);
    print_kv("original_samples", h.original_sample_count);
    print_kv("frames", h.frames);
    print_kv("levels", h.strides.len());
    print_kv("strides", join(&h.strides));
    print_kv("level_lengths", join(&h.level_lengths()));
    print_kv("bits_per_token", h.bits_per_token);
    print_kv("token_rates_hz", join(&rates));
    print_kv("bitrate_bps", bps);
    print_kv("payload_bytes", h.payload_bytes());
    eprintln!(
        "token rates: {} Hz",
        rounded
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    );
    eprintln!("bitrate: {bps} bps ({})", bitstream::format_bitrate(bps));
    Ok(())
}

fn peak_normalized(mut audio: AudioBuffer) -> AudioBuffer {
    let peak = audio.samples.iter().fold(0f32, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        for s in &mut audio.samples {
            *s /= peak;
        }
    }
    audio
}

fn compute_metrics(
    reference: &Path,
    estimate: &Path,
    set: &[Metric],
    peak_normalize: bool,
) -> Result<(), Failure> {
    let mut r = read_wav(reference)?;
    let mut e = read_wav(estimate)?;
    if peak_normalize {
        r = peak_normalized(r);
        e = peak_normalized(e);
    }
    let cfg = SpectralConfig::default();
    let mut results = Vec::new();
    for m in set {
        let (key, value) = match m {
            Metric::Sisdr => ("sisdr", metrics::si_sdr(&r, &e)),
            Metric::Mel => ("mel", metrics::mel_l1(&r, &e, &cfg)),
            Metric::Stft => ("stft", metrics::stft_l1(&r, &e, &cfg)),
        };
        results.push((key, value.user()?));
    }
    for (key, value) in &results {
        print_kv(key, value);
    }
    eprintln!(
        "{}",
        results
            .iter()
            .map(|(k, v)| format!("{k}: {v:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn train(
    features_path: &Path,
    output: &Path,
    model: &ModelArgs,
    iters: usize,
    batch_size: Option<usize>,
) -> Result<(), Failure> {
    if model.weights.is_some() {
        return Err(user_error(
            "train-codebooks builds a new codec; use --preset",
        ));
    }
    let x = features::read(features_path).user()?;
    let cfg = model.config(None)?;
    if x.channels() != cfg.latent_channels() {
        return Err(user_error(format!(
            "features have {} channels but the codec latent has {} (base channels x growth^stages)",
            x.channels(),
            cfg.latent_channels()
        )));
    }
    let levels: Vec<LevelConfig> = cfg
        .vq_strides
        .iter()
        .map(|&stride| LevelConfig {
            stride,
            codebook_size: cfg.codebook_size,
            codeword_dim: cfg.codeword_dim,
        })
        .collect();
    let opts = EmaOptions {
        iterations: iters,
        rng_seed: model.seed,
        batch_size,
        ..EmaOptions::default()
    };
    let trained = train_codebooks_ema(&x, &levels, &opts).map_err(|e| match e {
        msrvq::QuantizeError::InsufficientData(_) => Failure::User(e.into()),
        _ => Failure::Internal(e.into()),
    })?;

    let usable = x.frames() / cfg.stride_lcm() * cfg.stride_lcm();
    let codes = msrvq::quantize(&x.resized(usable), &trained.levels)?.codes;
    let usage = codebook_usage(&codes, &trained.levels);

    let mut codec = Codec::random(cfg, model.seed).map_err(classify)?;
    codec.set_quantizer(trained.levels).map_err(classify)?;
    codec
        .save_weights(output)
        .map_err(|e| user_error(format!("cannot write {}: {e}", output.display())))?;

    for (i, history) in trained.mse_history.iter().enumerate() {
        print_kv(&format!("level{i}.mse_trajectory"), join(history));
        print_kv(&format!("level{i}.final_mse"), trained.final_mse[i]);
        print_kv(&format!("level{i}.usage_entropy"), usage[i].entropy);
        print_kv(
            &format!("level{i}.codes_used"),
            usage[i].counts.iter().filter(|&&c| c > 0).count(),
        );
    }
    print_kv("residual_energy", join(&trained.residual_energy));
    eprintln!(
        "trained {} levels on {usable} frames; final MSE {}",
        trained.final_mse.len(),
        trained
            .final_mse
            .iter()
            .map(|m| format!("{m:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Encode {
            input,
            output,
            model,
        } => encode(&input, &output, &model),
        Command::Decode {
            input,
            output,
            model,
            noise,
        } => decode(&input, &output, &model, noise),
        Command::Latents {
            input,
            output,
            model,
        } => latents(&input, &output, &model),
        Command::Inspect { input } => inspect(&input),
        Command::Metrics {
            reference,
            estimate,
            set,
            peak_normalize,
        } => compute_metrics(&reference, &estimate, &set, peak_normalize),
        Command::TrainCodebooks {
            features,
            output,
            model,
            iters,
            batch_size,
        } => train(&features, &output, &model, iters, batch_size),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(1)
        }
    }
}
