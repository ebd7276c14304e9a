//! Little-endian binary helpers shared by the checkpoint and dataset formats.

use std::io::{self, Read, Write};

use ndarray::{Array1, Array2};

use super::adam::Adam;
use super::mlp::{Dense, Mlp};

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub fn write_f64s<W: Write>(w: &mut W, vs: &[f64]) -> io::Result<()> {
    for v in vs {
        write_f64(w, *v)?;
    }
    Ok(())
}

pub fn write_f32s<W: Write>(w: &mut W, vs: &[f32]) -> io::Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub fn read_u8<R: Read>(r: &mut R) -> io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_f64s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f64>> {
    (0..n).map(|_| read_f64(r)).collect()
}

pub fn read_f32s<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<f32>> {
    (0..n)
        .map(|_| {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(f32::from_le_bytes(b))
        })
        .collect()
}

pub fn read_str<R: Read>(r: &mut R) -> io::Result<String> {
    let n = read_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(invalid("string length out of range"));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| invalid("string is not UTF-8"))
}

pub fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

/// Layer count, `(fan_in, fan_out)` per layer, then the parameter blob.
pub fn write_mlp<W: Write>(w: &mut W, net: &Mlp) -> io::Result<()> {
    write_u32(w, net.layers.len() as u32)?;
    for l in &net.layers {
        write_u64(w, l.fan_in() as u64)?;
        write_u64(w, l.fan_out() as u64)?;
    }
    for t in net.tensors() {
        write_f64s(w, t)?;
    }
    Ok(())
}

pub fn read_mlp<R: Read>(r: &mut R) -> io::Result<Mlp> {
    let n = read_u32(r)? as usize;
    if n == 0 || n > 64 {
        return Err(invalid("layer count out of range"));
    }
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        let fan_in = read_u64(r)? as usize;
        let fan_out = read_u64(r)? as usize;
        if fan_in == 0 || fan_out == 0 || fan_in > 1 << 16 || fan_out > 1 << 16 {
            return Err(invalid("layer shape out of range"));
        }
        shapes.push((fan_in, fan_out));
    }
    let mut layers = Vec::with_capacity(n);
    for (fan_in, fan_out) in shapes {
        let w = Array2::from_shape_vec((fan_in, fan_out), read_f64s(r, fan_in * fan_out)?)
            .map_err(|_| invalid("bad weight shape"))?;
        let b = Array1::from_vec(read_f64s(r, fan_out)?);
        layers.push(Dense { w, b });
    }
    Ok(Mlp { layers })
}

pub fn write_adam<W: Write>(w: &mut W, opt: &Adam) -> io::Result<()> {
    write_f64s(w, &[opt.lr, opt.beta1, opt.beta2, opt.eps])?;
    write_u64(w, opt.t)?;
    write_u64(w, opt.m.len() as u64)?;
    write_f64s(w, &opt.m)?;
    write_f64s(w, &opt.v)
}

pub fn read_adam<R: Read>(r: &mut R) -> io::Result<Adam> {
    let lr = read_f64(r)?;
    let beta1 = read_f64(r)?;
    let beta2 = read_f64(r)?;
    let eps = read_f64(r)?;
    let t = read_u64(r)?;
    let n = read_u64(r)? as usize;
    if n > 1 << 28 {
        return Err(invalid("optimizer size out of range"));
    }
    let m = read_f64s(r, n)?;
    let v = read_f64s(r, n)?;
    Ok(Adam {
        lr,
        beta1,
        beta2,
        eps,
        t,
        m,
        v,
    })
}
