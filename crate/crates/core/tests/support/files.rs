//! Damaged copies of serialized model and bank files.

/// Offset of the first byte after the JSON header.
pub fn payload_start(bytes: &[u8]) -> usize {
    10 + u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize
}

pub fn corruptions(bytes: &[u8]) -> Vec<(String, Vec<u8>)> {
    let start = payload_start(bytes);
    let mut out = Vec::new();
    for cut in [0, 3, 5, 9, start / 2, start, start + 5, bytes.len() - 1] {
        out.push((format!("truncated at {cut}"), bytes[..cut].to_vec()));
    }
    let mut b = bytes.to_vec();
    b[0] = b'X';
    out.push(("bad magic".into(), b));
    let mut b = bytes.to_vec();
    b[4] = 9;
    out.push(("bad version".into(), b));
    let mut b = bytes.to_vec();
    b.push(0);
    out.push(("trailing byte".into(), b));
    let mut b = bytes.to_vec();
    b[start..start + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    out.push(("NaN value".into(), b));
    let mut b = bytes.to_vec();
    b[start..start + 4].copy_from_slice(&f32::INFINITY.to_le_bytes());
    out.push(("infinite value".into(), b));
    let mut b = bytes.to_vec();
    b[12] = b'#';
    out.push(("broken header json".into(), b));
    out
}
