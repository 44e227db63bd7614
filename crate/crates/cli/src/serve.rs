//! Read-only HTTP access to a dataset directory for browser clients.

use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::thread;

use anyhow::{anyhow, Context, Result};
use tiny_http::{Header, Method, Request, Response, Server};

use crate::commands::ServeArgs;
use crate::Common;

const WORKERS: usize = 4;

pub fn run(_common: &Common, args: &ServeArgs) -> Result<()> {
    let root = args
        .dataset
        .canonicalize()
        .with_context(|| format!("dataset directory {}", args.dataset.display()))?;
    anyhow::ensure!(root.join("manifest.json").is_file(), "{} has no manifest.json", root.display());

    let addr = format!("{}:{}", args.host, args.port);
    let server = Server::http(&addr).map_err(|e| anyhow!("cannot listen on {addr}: {e}"))?;
    let bound = server
        .server_addr()
        .to_ip()
        .map(|a| a.to_string())
        .unwrap_or(addr);
    println!("serving {} at http://{bound}/", root.display());
    std::io::stdout().flush()?;

    let server = Arc::new(server);
    let root = Arc::new(root);
    let workers: Vec<_> = (0..WORKERS)
        .map(|_| {
            let (server, root) = (Arc::clone(&server), Arc::clone(&root));
            thread::spawn(move || loop {
                match server.recv() {
                    Ok(req) => handle(&root, req),
                    Err(e) => {
                        log::error!("accept failed: {e}");
                        break;
                    }
                }
            })
        })
        .collect();
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header is valid")
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => "application/json",
        Some("jsonl") => "application/x-ndjson",
        Some("png") => "image/png",
        Some("csv") => "text/csv; charset=utf-8",
        _ => "application/octet-stream",
    }
}

fn percent_decode(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = std::str::from_utf8(bytes.get(i + 1..i + 3)?).ok()?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

/// Maps a request path to a file inside `root`, or `None` if it would leave it.
fn resolve(root: &Path, url: &str) -> Option<PathBuf> {
    let path = url.split(['?', '#']).next().unwrap_or("");
    let decoded = percent_decode(path)?;
    let relative = decoded.trim_start_matches('/');
    let relative = if relative.is_empty() { "manifest.json" } else { relative };
    let rel = Path::new(relative);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    let full = root.join(rel).canonicalize().ok()?;
    full.starts_with(root).then_some(full)
}

fn handle(root: &Path, req: Request) {
    let cors = header("Access-Control-Allow-Origin", "*");
    let response = match req.method() {
        Method::Get | Method::Head => match resolve(root, req.url()).filter(|p| p.is_file()) {
            Some(path) => match fs::read(&path) {
                Ok(bytes) => Response::from_data(bytes)
                    .with_header(header("Content-Type", content_type(&path)))
                    .with_header(header("Cache-Control", "no-cache")),
                Err(e) => {
                    log::warn!("{}: {e}", path.display());
                    Response::from_string("read error\n").with_status_code(500)
                }
            },
            None => Response::from_string("not found\n").with_status_code(404),
        },
        Method::Options => Response::from_data(Vec::new())
            .with_status_code(204)
            .with_header(header("Access-Control-Allow-Methods", "GET, HEAD, OPTIONS"))
            .with_header(header("Access-Control-Allow-Headers", "*")),
        _ => Response::from_string("method not allowed\n")
            .with_status_code(405)
            .with_header(header("Allow", "GET, HEAD, OPTIONS")),
    };
    log::debug!("{} {} -> {}", req.method(), req.url(), response.status_code().0);
    if let Err(e) = req.respond(response.with_header(cors)) {
        log::debug!("client went away: {e}");
    }
}
