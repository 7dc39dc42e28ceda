//! Length-prefixed submission protocol.
//!
//! Request: magic `BSG1` | payload length u32 little-endian | payload.
//! Response: one verdict record line (JSON). One request per connection.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;

use crate::verdict::Verdict;
use crate::{GatewayError, Result};

pub const WIRE_MAGIC: &[u8; 4] = b"BSG1";
pub const DEFAULT_MAX_BYTES: usize = 16 * 1024 * 1024;

/// Read one request from a stream, enforcing the payload size limit.
pub fn read_request(stream: &mut TcpStream, max_bytes: usize) -> Result<Vec<u8>> {
    let mut magic = [0u8; 4];
    stream.read_exact(&mut magic)?;
    if &magic != WIRE_MAGIC {
        return Err(GatewayError::Wire(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(WIRE_MAGIC)
        )));
    }
    let mut len_bytes = [0u8; 4];
    stream.read_exact(&mut len_bytes)?;
    let len = u32::from_le_bytes(len_bytes) as usize;
    if len > max_bytes {
        return Err(GatewayError::Wire(format!(
            "payload length {len} exceeds limit {max_bytes}"
        )));
    }
    let mut payload = vec![0u8; len];
    stream.read_exact(&mut payload)?;
    Ok(payload)
}

/// Write a verdict line as the response.
pub fn write_response(stream: &mut TcpStream, verdict: &Verdict) -> Result<()> {
    let mut line = verdict.to_line();
    line.push('\n');
    stream.write_all(line.as_bytes())?;
    stream.flush()?;
    Ok(())
}

/// Client side: submit a payload and parse the verdict response.
pub fn submit(addr: &str, payload: &[u8]) -> Result<Verdict> {
    let mut stream = TcpStream::connect(addr)?;
    stream.write_all(WIRE_MAGIC)?;
    stream.write_all(&(payload.len() as u32).to_le_bytes())?;
    stream.write_all(payload)?;
    stream.flush()?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    serde_json::from_str(line.trim_end())
        .map_err(|e| GatewayError::Wire(format!("unparseable response: {e}")))
}

/// Client side: submit raw bytes without the protocol framing, for testing
/// the server's bad-magic handling.
pub fn submit_raw(addr: &str, raw: &[u8]) -> Result<String> {
    let mut stream = TcpStream::connect(addr)?;
    stream.write_all(raw)?;
    stream.flush()?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    Ok(line.trim_end().to_string())
}
