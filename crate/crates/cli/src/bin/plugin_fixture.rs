//! Reference denoiser plugin and scripted test double.
//!
//! Speaks protocol v1 on stdio, or on TCP with `--listen`. The `gaussian`
//! mode answers with the exact Gaussian-prior noise estimate on a cosine
//! schedule of the negotiated length; the remaining non-standard modes break
//! the protocol in one specific way each.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use ksgdiffuse::denoiser::plugin::{
    serve, EchoHandler, PluginHandler, ZeroHandler, MAGIC, OP_PREDICTION,
};
use ksgdiffuse::denoiser::Geometry;
use ksgdiffuse::kspace::format::{read_cim, Cim};
use ksgdiffuse::{ComplexImage, Denoiser, GaussianPriorDenoiser, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Echo,
    Zero,
    Gaussian,
    /// Refuses every geometry.
    Reject,
    /// Answers the handshake with the wrong magic.
    BadMagic,
    /// Accepts, then never answers a request.
    Hang,
    /// Sends half a response frame and closes.
    Truncate,
    /// Answers with NaN everywhere.
    Nan,
}

#[derive(Debug, Parser)]
#[command(name = "ksgdiffuse-plugin", about = "Denoiser plugin fixture (protocol v1)")]
struct Args {
    #[arg(long, value_enum, default_value = "echo")]
    mode: Mode,
    /// Prior mean for `gaussian`; zero when absent.
    #[arg(long)]
    mu: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    s2: f64,
    /// Serve TCP connections on this address instead of stdio.
    #[arg(long)]
    listen: Option<String>,
}

struct GaussianHandler {
    mu: Option<ComplexImage>,
    s2: f64,
    state: Option<(GaussianPriorDenoiser, Schedule)>,
}

impl PluginHandler for GaussianHandler {
    fn accept(&mut self, g: Geometry) -> bool {
        let (h, w) = (g.height as usize, g.width as usize);
        let mu = match &self.mu {
            Some(mu) if mu.shape() == (h, w) => mu.clone(),
            Some(_) => return false,
            None => ComplexImage::zeros(h, w),
        };
        let (Ok(d), Ok(s)) = (GaussianPriorDenoiser::new(mu, self.s2), Schedule::new_cosine(g.steps as usize)) else {
            return false;
        };
        self.state = Some((d, s));
        true
    }

    fn predict(&mut self, y_t: &ComplexImage, t: usize) -> ksgdiffuse::Result<ComplexImage> {
        let (d, s) = self.state.as_ref().expect("handshake accepted");
        d.predict_noise(y_t, t, s)
    }
}

fn read_hello(reader: &mut impl Read) -> io::Result<Geometry> {
    let mut hello = [0u8; 16];
    reader.read_exact(&mut hello)?;
    let field = |i: usize| u32::from_le_bytes(hello[i..i + 4].try_into().unwrap());
    Ok(Geometry {
        height: field(4),
        width: field(8),
        steps: field(12),
    })
}

fn read_request(reader: &mut impl Read, g: Geometry) -> io::Result<()> {
    let mut buf = vec![0u8; 5 + g.height as usize * g.width as usize * 8];
    reader.read_exact(&mut buf)
}

/// Fault modes: each misbehaves at a single, fixed point of the session.
fn scripted(mode: Mode, mut reader: impl Read, mut writer: impl Write) -> io::Result<()> {
    let g = read_hello(&mut reader)?;
    match mode {
        Mode::Reject => {
            writer.write_all(MAGIC)?;
            writer.write_all(&[0])?;
        }
        Mode::BadMagic => writer.write_all(b"XXXX\x01")?,
        Mode::Hang | Mode::Truncate | Mode::Nan => {
            writer.write_all(MAGIC)?;
            writer.write_all(&[1])?;
            writer.flush()?;
            read_request(&mut reader, g)?;
            let len = g.height as usize * g.width as usize * 8;
            match mode {
                Mode::Hang => loop {
                    thread::sleep(Duration::from_secs(3600));
                },
                Mode::Truncate => {
                    let mut frame = vec![OP_PREDICTION];
                    frame.resize(1 + len / 2, 0);
                    writer.write_all(&frame)?;
                }
                _ => {
                    let mut frame = vec![OP_PREDICTION];
                    for _ in 0..len / 4 {
                        frame.extend_from_slice(&f32::NAN.to_le_bytes());
                    }
                    writer.write_all(&frame)?;
                    writer.flush()?;
                    // keep the stream open until the client gives up
                    let mut sink = Vec::new();
                    let _ = reader.read_to_end(&mut sink);
                }
            }
        }
        _ => unreachable!(),
    }
    writer.flush()
}

fn session(args: &Args, mu: Option<&ComplexImage>, reader: impl Read, writer: impl Write) -> Result<(), String> {
    let reader = BufReader::new(reader);
    let writer = BufWriter::new(writer);
    let served = match args.mode {
        Mode::Echo => serve(reader, writer, &mut EchoHandler),
        Mode::Zero => serve(reader, writer, &mut ZeroHandler),
        Mode::Gaussian => serve(
            reader,
            writer,
            &mut GaussianHandler {
                mu: mu.cloned(),
                s2: args.s2,
                state: None,
            },
        ),
        mode => return scripted(mode, reader, writer).map_err(|e| e.to_string()),
    };
    served.map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mu = match &args.mu {
        Some(path) => match std::fs::File::open(path).map_err(|e| e.to_string()).and_then(|f| {
            read_cim(BufReader::new(f)).map_err(|e| e.to_string())
        }) {
            Ok(Cim::Image(img)) => Some(img),
            Ok(Cim::KSpace(_)) => {
                eprintln!("ksgdiffuse-plugin: {} must be an image-domain file", path.display());
                return ExitCode::from(2);
            }
            Err(e) => {
                eprintln!("ksgdiffuse-plugin: {}: {e}", path.display());
                return ExitCode::from(3);
            }
        },
        None => None,
    };

    match &args.listen {
        None => match session(&args, mu.as_ref(), io::stdin().lock(), io::stdout().lock()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("ksgdiffuse-plugin: {e}");
                ExitCode::from(4)
            }
        },
        Some(addr) => {
            let listener = match TcpListener::bind(addr) {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("ksgdiffuse-plugin: cannot listen on {addr}: {e}");
                    return ExitCode::from(3);
                }
            };
            if let Ok(local) = listener.local_addr() {
                println!("{local}");
                let _ = io::stdout().flush();
            }
            thread::scope(|scope| {
                for stream in listener.incoming().flatten() {
                    let (args, mu) = (&args, mu.as_ref());
                    scope.spawn(move || {
                        let Ok(reader) = stream.try_clone() else { return };
                        if let Err(e) = session(args, mu, reader, stream) {
                            eprintln!("ksgdiffuse-plugin: {e}");
                        }
                    });
                }
            });
            ExitCode::SUCCESS
        }
    }
}
