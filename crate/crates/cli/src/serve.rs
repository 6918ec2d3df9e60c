use crate::experiment::ExperimentFile;
use crate::{Failure, ServeArgs, EXIT_OK};
use anyhow::Context;
use stagerl_core::bridge::Session;
use stagerl_core::{ArmConfig, ArmEnv};
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

/// Answers one line per request until the reader is exhausted.
pub fn serve_stdio<R: BufRead, W: Write>(env: ArmEnv, reader: R, mut writer: W) -> io::Result<()> {
    let mut session = Session::new(env);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(writer, "{}", session.handle_line(&line))?;
        writer.flush()?;
    }
    Ok(())
}

fn handle_connection(env: ArmEnv, stream: TcpStream) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_stdio(env, reader, stream)
}

fn arm_from_args(args: &ServeArgs) -> Result<ArmConfig, Failure> {
    match &args.config {
        Some(path) => {
            let file = ExperimentFile::load(path, &[]).map_err(Failure::usage)?;
            Ok(ArmConfig {
                max_steps: file.run.steps,
                ..file.env.arm()
            })
        }
        None if args.preset == "planar_2dof" => Ok(ArmConfig::planar_2dof()),
        None => Ok(ArmConfig::six_dof()),
    }
}

pub(crate) fn env_serve(args: &ServeArgs) -> Result<i32, Failure> {
    let env = ArmEnv::new(arm_from_args(args)?).map_err(Failure::usage)?;
    if args.stdio {
        let stdin = io::stdin();
        serve_stdio(env, stdin.lock(), io::stdout().lock()).map_err(Failure::run)?;
        return Ok(EXIT_OK);
    }
    let port = args.port.expect("clap requires --port without --stdio");
    let listener = TcpListener::bind(("127.0.0.1", port))
        .with_context(|| format!("cannot listen on 127.0.0.1:{port}"))
        .map_err(Failure::run)?;
    let addr = listener.local_addr().map_err(Failure::run)?;
    println!("listening on {addr}");
    io::stdout().flush().map_err(Failure::run)?;
    for stream in listener.incoming() {
        match stream {
            Ok(stream) => {
                let env = env.clone();
                std::thread::spawn(move || {
                    if let Err(e) = handle_connection(env, stream) {
                        eprintln!("connection closed: {e}");
                    }
                });
            }
            Err(e) => eprintln!("accept failed: {e}"),
        }
    }
    Ok(EXIT_OK)
}
