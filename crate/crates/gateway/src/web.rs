//! HTTP side of the WebSocket listener: upgrades to WebSocket, otherwise
//! serves the console's static files.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::path::{Component, Path, PathBuf};
use tungstenite::handshake::derive_accept_key;
use tungstenite::protocol::Role;
use tungstenite::WebSocket;

const MAX_HEAD: usize = 16 * 1024;

pub(crate) enum HttpOutcome {
    WebSocket(Box<WebSocket<TcpStream>>),
    Served,
}

struct Request {
    method: String,
    path: String,
    ws_key: Option<String>,
}

fn read_head(stream: &mut TcpStream) -> io::Result<Vec<u8>> {
    let mut head = Vec::new();
    let mut byte = [0u8; 1];
    // Byte at a time so nothing past the head is consumed.
    while !head.ends_with(b"\r\n\r\n") {
        if head.len() >= MAX_HEAD {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "request head too large"));
        }
        if stream.read(&mut byte)? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "connection closed"));
        }
        head.push(byte[0]);
    }
    Ok(head)
}

fn parse(head: &[u8]) -> io::Result<Request> {
    let mut headers = [httparse::EMPTY_HEADER; 64];
    let mut req = httparse::Request::new(&mut headers);
    req.parse(head)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    let header = |name: &str| {
        req.headers
            .iter()
            .find(|h| h.name.eq_ignore_ascii_case(name))
            .map(|h| String::from_utf8_lossy(h.value).into_owned())
    };
    let upgrade = header("upgrade").is_some_and(|v| v.eq_ignore_ascii_case("websocket"));
    Ok(Request {
        method: req.method.unwrap_or("").to_string(),
        path: req.path.unwrap_or("/").to_string(),
        ws_key: if upgrade { header("sec-websocket-key") } else { None },
    })
}

fn respond(stream: &mut TcpStream, status: &str, content_type: &str, body: &[u8]) -> io::Result<()> {
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(body)?;
    stream.flush()
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json" | "map") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

/// Maps a request path under `root`, refusing anything that climbs out.
pub(crate) fn resolve(root: &Path, request_path: &str) -> Option<PathBuf> {
    let path = request_path.split(['?', '#']).next().unwrap_or("/");
    let rel = Path::new(path.trim_start_matches('/'));
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    let mut full = root.join(rel);
    if path.ends_with('/') || rel.as_os_str().is_empty() {
        full = full.join("index.html");
    }
    Some(full)
}

pub(crate) fn accept(mut stream: TcpStream, console_dir: Option<&Path>) -> io::Result<HttpOutcome> {
    let head = read_head(&mut stream)?;
    let req = parse(&head)?;
    if let Some(key) = req.ws_key {
        write!(
            stream,
            "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: {}\r\n\r\n",
            derive_accept_key(key.trim().as_bytes())
        )?;
        stream.flush()?;
        let ws = WebSocket::from_raw_socket(stream, Role::Server, None);
        return Ok(HttpOutcome::WebSocket(Box::new(ws)));
    }
    if req.method != "GET" && req.method != "HEAD" {
        respond(&mut stream, "405 Method Not Allowed", "text/plain", b"method not allowed\n")?;
        return Ok(HttpOutcome::Served);
    }
    let file = console_dir.and_then(|root| resolve(root, &req.path));
    match file.map(|f| (std::fs::read(&f), f)) {
        Some((Ok(body), f)) => {
            let body = if req.method == "HEAD" { Vec::new() } else { body };
            respond(&mut stream, "200 OK", content_type(&f), &body)?
        }
        _ => respond(&mut stream, "404 Not Found", "text/plain", b"not found\n")?,
    }
    Ok(HttpOutcome::Served)
}
