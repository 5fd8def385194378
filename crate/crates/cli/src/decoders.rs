use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::str::FromStr;

use retrans::decode::{EchoLexiconDecoder, ExternalDecoder, NoisyBeamDecoder, ToyDictionary};
use retrans::synth::toy_dictionary;
use retrans::Decoder;

/// Environment variable naming the external decoder used when `--decoder`
/// is absent.
pub const DECODER_ENV: &str = "RETRANS_DECODER_CMD";

/// Noise amplitude of the built-in `noisy-beam` decoder.
pub const DEFAULT_NOISE: f64 = 1.5;

pub type BoxedDecoder = Box<dyn Decoder + Send>;

/// A decoder named on the command line.
///
/// `echo`, `echo-monotone` and `noisy-beam` use the toy dictionary; each
/// accepts `:<dict.tsv>` to load another one. `exec:<command>` runs an
/// external decoder through the shell.
#[derive(Debug, Clone, PartialEq)]
pub enum DecoderSpec {
    Echo { dictionary: Option<PathBuf>, window: usize },
    NoisyBeam { dictionary: Option<PathBuf> },
    Exec(String),
}

#[derive(Debug)]
pub struct SpecError(pub String);

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SpecError {}

impl FromStr for DecoderSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let dictionary = || match arg {
            Some("") => Err(SpecError(format!("decoder {s:?}: empty dictionary path"))),
            other => Ok(other.map(PathBuf::from)),
        };
        match name {
            "echo" => Ok(Self::Echo { dictionary: dictionary()?, window: 1 }),
            "echo-monotone" => Ok(Self::Echo { dictionary: dictionary()?, window: 0 }),
            "noisy-beam" => Ok(Self::NoisyBeam { dictionary: dictionary()? }),
            "exec" => match arg.map(str::trim) {
                Some(cmd) if !cmd.is_empty() => Ok(Self::Exec(cmd.to_string())),
                _ => Err(SpecError("exec: needs a command".into())),
            },
            _ => Err(SpecError(format!(
                "unknown decoder {s:?} (expected echo, echo-monotone, noisy-beam or exec:<command>)"
            ))),
        }
    }
}

impl fmt::Display for DecoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let with_dict = |f: &mut fmt::Formatter<'_>, name: &str, d: &Option<PathBuf>| match d {
            Some(p) => write!(f, "{name}:{}", p.display()),
            None => f.write_str(name),
        };
        match self {
            Self::Echo { dictionary, window: 0 } => with_dict(f, "echo-monotone", dictionary),
            Self::Echo { dictionary, .. } => with_dict(f, "echo", dictionary),
            Self::NoisyBeam { dictionary } => with_dict(f, "noisy-beam", dictionary),
            Self::Exec(cmd) => write!(f, "exec:{cmd}"),
        }
    }
}

impl DecoderSpec {
    /// `--decoder` if given, else the external command in the environment,
    /// else the reordering echo decoder.
    pub fn resolve(flag: Option<&str>, env: Option<&str>) -> Result<Self, SpecError> {
        match (flag, env.map(str::trim)) {
            (Some(s), _) => s.parse(),
            (None, Some(cmd)) if !cmd.is_empty() => Ok(Self::Exec(cmd.to_string())),
            _ => Ok(Self::Echo { dictionary: None, window: 1 }),
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self, Self::Exec(_))
    }

    fn dictionary(path: &Option<PathBuf>) -> Result<ToyDictionary, SpecError> {
        match path {
            None => Ok(toy_dictionary()),
            Some(p) => {
                let file = File::open(p).map_err(|e| SpecError(format!("cannot open dictionary {}: {e}", p.display())))?;
                ToyDictionary::read_tsv(BufReader::new(file))
                    .map_err(|e| SpecError(format!("bad dictionary {}: {e}", p.display())))
            }
        }
    }

    /// Builds a fresh decoder instance. External decoders are started and
    /// handshaken here.
    pub fn build(&self, seed: u64) -> Result<BoxedDecoder, SpecError> {
        Ok(match self {
            Self::Echo { dictionary, window } => {
                Box::new(EchoLexiconDecoder::new(Self::dictionary(dictionary)?, *window))
            }
            Self::NoisyBeam { dictionary } => Box::new(NoisyBeamDecoder::from_dictionary(
                &Self::dictionary(dictionary)?,
                DEFAULT_NOISE,
                seed,
            )),
            Self::Exec(cmd) => Box::new(ExternalDecoder::spawn(cmd).map_err(|e| SpecError(e.to_string()))?),
        })
    }
}
