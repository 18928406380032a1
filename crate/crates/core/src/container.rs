//! The `PODNS1` binary container.
//!
//! Every file starts with the magic bytes `PODNS1`, a record kind byte and
//! the fingerprint of the mesh the data lives on. All integers are `u64` and
//! all reals are IEEE doubles, little-endian, so a round trip is bit-exact.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::fom::{FomConfig, NonlinearMethod, NonlinearSettings, Scheme, SnapshotSet};
use crate::pod::{FieldKind, InnerProduct, PodBasis};
use crate::rom::{PressureMethod, PressureTrajectory, RomTrajectory};

pub const MAGIC: &[u8; 6] = b"PODNS1";

/// Largest element count accepted when decoding a length field.
const MAX_LEN: u64 = 1 << 40;

pub trait Record: Sized {
    const KIND: u8;

    fn encode(&self, w: &mut dyn Write) -> io::Result<()>;

    fn decode(r: &mut dyn Read) -> Result<Self>;
}

pub fn write_record<T: Record>(mut w: impl Write, value: &T, fingerprint: u64) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u8(T::KIND)?;
    w.write_u64::<LE>(fingerprint)?;
    value.encode(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads a record and the mesh fingerprint stored with it.
pub fn read_record<T: Record>(mut r: impl Read) -> Result<(T, u64)> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic).map_err(eof)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a PODNS1 container".into()));
    }
    let kind = r.read_u8().map_err(eof)?;
    if kind != T::KIND {
        return Err(Error::Format(format!("record kind {kind}, expected {}", T::KIND)));
    }
    let fingerprint = r.read_u64::<LE>().map_err(eof)?;
    let value = T::decode(&mut r)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after record".into()));
    }
    Ok((value, fingerprint))
}

pub fn save<T: Record>(path: &Path, value: &T, fingerprint: u64) -> Result<()> {
    write_record(BufWriter::new(File::create(path)?), value, fingerprint)
}

/// Loads a record, rejecting it when `expected` is given and differs from
/// the stored fingerprint.
pub fn load<T: Record>(path: &Path, expected: Option<u64>) -> Result<T> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(Error::MissingArtifact(path.display().to_string()));
        }
        Err(e) => return Err(e.into()),
    };
    let (value, artifact) = read_record(BufReader::new(file))?;
    match expected {
        Some(current) if current != artifact => Err(Error::StaleArtifact { artifact, current }),
        _ => Ok(value),
    }
}

fn eof(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("truncated container".into())
    } else {
        Error::Io(e)
    }
}

fn put_len(w: &mut dyn Write, n: usize) -> io::Result<()> {
    w.write_u64::<LE>(n as u64)
}

fn put_f64(w: &mut dyn Write, v: f64) -> io::Result<()> {
    w.write_u64::<LE>(v.to_bits())
}

fn put_opt(w: &mut dyn Write, v: Option<f64>) -> io::Result<()> {
    w.write_u8(u8::from(v.is_some()))?;
    put_f64(w, v.unwrap_or(0.0))
}

fn put_array(w: &mut dyn Write, v: &[f64]) -> io::Result<()> {
    put_len(w, v.len())?;
    v.iter().try_for_each(|&x| put_f64(w, x))
}

fn put_arrays(w: &mut dyn Write, v: &[Vec<f64>]) -> io::Result<()> {
    put_len(w, v.len())?;
    v.iter().try_for_each(|x| put_array(w, x))
}

fn get_len(r: &mut dyn Read) -> Result<usize> {
    let n = r.read_u64::<LE>().map_err(eof)?;
    if n > MAX_LEN {
        return Err(Error::Format(format!("implausible length {n}")));
    }
    Ok(n as usize)
}

fn get_f64(r: &mut dyn Read) -> Result<f64> {
    Ok(f64::from_bits(r.read_u64::<LE>().map_err(eof)?))
}

fn get_bool(r: &mut dyn Read) -> Result<bool> {
    match r.read_u8().map_err(eof)? {
        0 => Ok(false),
        1 => Ok(true),
        b => Err(Error::Format(format!("invalid flag byte {b}"))),
    }
}

fn get_opt(r: &mut dyn Read) -> Result<Option<f64>> {
    let some = get_bool(r)?;
    let v = get_f64(r)?;
    Ok(some.then_some(v))
}

fn get_array(r: &mut dyn Read) -> Result<Vec<f64>> {
    let n = get_len(r)?;
    let mut v = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        v.push(get_f64(r)?);
    }
    Ok(v)
}

fn get_arrays(r: &mut dyn Read) -> Result<Vec<Vec<f64>>> {
    let n = get_len(r)?;
    (0..n).map(|_| get_array(r)).collect()
}

fn get_opt_array(r: &mut dyn Read) -> Result<Option<Vec<f64>>> {
    if get_bool(r)? {
        get_array(r).map(Some)
    } else {
        Ok(None)
    }
}

fn put_opt_array(w: &mut dyn Write, v: Option<&[f64]>) -> io::Result<()> {
    w.write_u8(u8::from(v.is_some()))?;
    v.map_or(Ok(()), |v| put_array(w, v))
}

fn scheme_byte(s: Scheme) -> u8 {
    match s {
        Scheme::ImplicitEuler => 0,
        Scheme::Bdf2 => 1,
    }
}

fn get_scheme(r: &mut dyn Read) -> Result<Scheme> {
    match r.read_u8().map_err(eof)? {
        0 => Ok(Scheme::ImplicitEuler),
        1 => Ok(Scheme::Bdf2),
        b => Err(Error::Format(format!("invalid scheme byte {b}"))),
    }
}

fn put_config(w: &mut dyn Write, c: &FomConfig) -> io::Result<()> {
    for v in [c.nu, c.mu, c.dt, c.t_start, c.t_end, c.record_start, c.nonlinear.tolerance] {
        put_f64(w, v)?;
    }
    w.write_u8(scheme_byte(c.scheme))?;
    put_len(w, c.nonlinear.max_iterations)?;
    w.write_u8(match c.nonlinear.method {
        NonlinearMethod::Picard => 0,
        NonlinearMethod::Newton => 1,
    })
}

fn get_config(r: &mut dyn Read) -> Result<FomConfig> {
    let mut v = [0.0; 7];
    for x in &mut v {
        *x = get_f64(r)?;
    }
    let scheme = get_scheme(r)?;
    let max_iterations = get_len(r)?;
    let method = match r.read_u8().map_err(eof)? {
        0 => NonlinearMethod::Picard,
        1 => NonlinearMethod::Newton,
        b => return Err(Error::Format(format!("invalid nonlinear method byte {b}"))),
    };
    Ok(FomConfig {
        nu: v[0],
        mu: v[1],
        dt: v[2],
        t_start: v[3],
        t_end: v[4],
        record_start: v[5],
        scheme,
        nonlinear: NonlinearSettings { tolerance: v[6], max_iterations, method },
    })
}

fn check_lengths(what: &str, arrays: &[Vec<f64>], len: usize) -> Result<()> {
    match arrays.iter().find(|a| a.len() != len) {
        Some(a) => Err(Error::Format(format!("{what} vector of length {} instead of {len}", a.len()))),
        None => Ok(()),
    }
}

impl Record for SnapshotSet {
    const KIND: u8 = 1;

    fn encode(&self, w: &mut dyn Write) -> io::Result<()> {
        put_len(w, self.n_velocity)?;
        put_len(w, self.n_pressure)?;
        put_len(w, self.derivative_start)?;
        w.write_u64::<LE>(self.mesh_fingerprint)?;
        put_opt(w, self.tau)?;
        put_config(w, &self.config)?;
        put_array(w, &self.times)?;
        put_arrays(w, &self.velocity)?;
        put_arrays(w, &self.pressure)?;
        put_arrays(w, &self.derivatives)
    }

    fn decode(r: &mut dyn Read) -> Result<Self> {
        let n_velocity = get_len(r)?;
        let n_pressure = get_len(r)?;
        let derivative_start = get_len(r)?;
        let mesh_fingerprint = r.read_u64::<LE>().map_err(eof)?;
        let tau = get_opt(r)?;
        let config = get_config(r)?;
        let times = get_array(r)?;
        let velocity = get_arrays(r)?;
        let pressure = get_arrays(r)?;
        let derivatives = get_arrays(r)?;
        if velocity.len() != times.len() || pressure.len() != times.len() {
            return Err(Error::Format("snapshot counts differ from the number of instants".into()));
        }
        check_lengths("velocity", &velocity, n_velocity)?;
        check_lengths("derivative", &derivatives, n_velocity)?;
        check_lengths("pressure", &pressure, n_pressure)?;
        Ok(SnapshotSet {
            config,
            times,
            velocity,
            pressure,
            derivatives,
            derivative_start,
            tau,
            mesh_fingerprint,
            n_velocity,
            n_pressure,
        })
    }
}

impl Record for PodBasis {
    const KIND: u8 = 2;

    fn encode(&self, w: &mut dyn Write) -> io::Result<()> {
        w.write_u8(match self.kind {
            FieldKind::Velocity => 0,
            FieldKind::Pressure => 1,
        })?;
        w.write_u8(match self.inner_product {
            InnerProduct::L2 => 0,
            InnerProduct::H1 => 1,
        })?;
        put_f64(w, self.cutoff)?;
        put_opt(w, self.tau)?;
        put_array(w, &self.spectrum)?;
        put_array(w, &self.eigenvalues)?;
        put_arrays(w, &self.modes)?;
        put_opt_array(w, self.mean.as_deref())
    }

    fn decode(r: &mut dyn Read) -> Result<Self> {
        let kind = match r.read_u8().map_err(eof)? {
            0 => FieldKind::Velocity,
            1 => FieldKind::Pressure,
            b => return Err(Error::Format(format!("invalid field byte {b}"))),
        };
        let inner_product = match r.read_u8().map_err(eof)? {
            0 => InnerProduct::L2,
            1 => InnerProduct::H1,
            b => return Err(Error::Format(format!("invalid inner product byte {b}"))),
        };
        let cutoff = get_f64(r)?;
        let tau = get_opt(r)?;
        let spectrum = get_array(r)?;
        let eigenvalues = get_array(r)?;
        let modes = get_arrays(r)?;
        let mean = get_opt_array(r)?;
        if modes.len() != eigenvalues.len() {
            return Err(Error::Format("mode and eigenvalue counts differ".into()));
        }
        if let Some(m) = modes.first() {
            check_lengths("mode", &modes, m.len())?;
        }
        Ok(PodBasis { eigenvalues, modes, cutoff, inner_product, kind, spectrum, tau, mean })
    }
}

impl Record for RomTrajectory {
    const KIND: u8 = 3;

    fn encode(&self, w: &mut dyn Write) -> io::Result<()> {
        put_len(w, self.r)?;
        w.write_u8(u8::from(self.lifted))?;
        w.write_u8(scheme_byte(self.scheme))?;
        for v in [self.dt, self.nu, self.mu] {
            put_f64(w, v)?;
        }
        put_array(w, &self.times)?;
        put_arrays(w, &self.coefficients)?;
        put_len(w, self.iterations.len())?;
        self.iterations.iter().try_for_each(|&i| put_len(w, i))
    }

    fn decode(r: &mut dyn Read) -> Result<Self> {
        let rank = get_len(r)?;
        let lifted = get_bool(r)?;
        let scheme = get_scheme(r)?;
        let (dt, nu, mu) = (get_f64(r)?, get_f64(r)?, get_f64(r)?);
        let times = get_array(r)?;
        let coefficients = get_arrays(r)?;
        let n = get_len(r)?;
        let iterations = (0..n).map(|_| get_len(r)).collect::<Result<Vec<_>>>()?;
        if coefficients.len() != times.len() || iterations.len() != times.len() {
            return Err(Error::Format("trajectory counts differ from the number of instants".into()));
        }
        check_lengths("coefficient", &coefficients, rank)?;
        Ok(RomTrajectory { times, coefficients, lifted, r: rank, scheme, dt, nu, mu, iterations })
    }
}

impl Record for PressureTrajectory {
    const KIND: u8 = 4;

    fn encode(&self, w: &mut dyn Write) -> io::Result<()> {
        w.write_u8(match self.method {
            PressureMethod::Se => 0,
            PressureMethod::Sm => 1,
        })?;
        w.write_u8(scheme_byte(self.quotient))?;
        put_array(w, &self.times)?;
        put_arrays(w, &self.coefficients)
    }

    fn decode(r: &mut dyn Read) -> Result<Self> {
        let method = match r.read_u8().map_err(eof)? {
            0 => PressureMethod::Se,
            1 => PressureMethod::Sm,
            b => return Err(Error::Format(format!("invalid method byte {b}"))),
        };
        let quotient = get_scheme(r)?;
        let times = get_array(r)?;
        let coefficients = get_arrays(r)?;
        if coefficients.len() != times.len() {
            return Err(Error::Format("trajectory counts differ from the number of instants".into()));
        }
        if let Some(c) = coefficients.first() {
            check_lengths("coefficient", &coefficients, c.len())?;
        }
        Ok(PressureTrajectory { method, quotient, times, coefficients })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snapshots() -> SnapshotSet {
        SnapshotSet {
            config: FomConfig::noflow(),
            times: vec![0.0, 0.005, 0.01],
            velocity: vec![vec![0.1, -0.0, f64::MIN_POSITIVE]; 3],
            pressure: vec![vec![1.0, 2.0], vec![3.0, f64::NAN], vec![-5.0, 1e300]],
            derivatives: vec![vec![1.0, 2.0, 3.0]; 2],
            derivative_start: 1,
            tau: Some(1.0 / 6.0),
            mesh_fingerprint: 0xdead_beef,
            n_velocity: 3,
            n_pressure: 2,
        }
    }

    fn roundtrip<T: Record>(v: &T, fp: u64) -> (Vec<u8>, T) {
        let mut buf = Vec::new();
        write_record(&mut buf, v, fp).unwrap();
        let (back, f) = read_record::<T>(buf.as_slice()).unwrap();
        assert_eq!(f, fp);
        let mut again = Vec::new();
        write_record(&mut again, &back, fp).unwrap();
        assert_eq!(buf, again);
        (buf, back)
    }

    #[test]
    fn header_layout() {
        let (buf, back) = roundtrip(&snapshots(), 7);
        assert_eq!(&buf[..6], b"PODNS1");
        assert_eq!(buf[6], 1);
        assert_eq!(buf[7..15], 7u64.to_le_bytes());
        // n_velocity follows the header
        assert_eq!(buf[15..23], 3u64.to_le_bytes());
        assert_eq!(back.times, snapshots().times);
        assert!(back.pressure[1][1].is_nan());
        assert_eq!(back.velocity[0][1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn kind_mismatch_and_truncation() {
        let mut buf = Vec::new();
        write_record(&mut buf, &snapshots(), 0).unwrap();
        assert!(matches!(read_record::<PodBasis>(buf.as_slice()), Err(Error::Format(_))));
        let cut = &buf[..buf.len() - 3];
        assert!(matches!(read_record::<SnapshotSet>(cut), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_record::<SnapshotSet>(bad.as_slice()), Err(Error::Format(_))));
        buf.push(0);
        assert!(matches!(read_record::<SnapshotSet>(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn basis_and_trajectories() {
        let basis = PodBasis {
            eigenvalues: vec![2.0, 1.0],
            modes: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            cutoff: 1e-10,
            inner_product: InnerProduct::H1,
            kind: FieldKind::Velocity,
            spectrum: vec![2.0, 1.0, 0.0],
            tau: Some(0.3),
            mean: Some(vec![0.5, 0.25]),
        };
        assert_eq!(roundtrip(&basis, 1).1, basis);
        let rom = RomTrajectory {
            times: vec![0.0, 0.1],
            coefficients: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            lifted: true,
            r: 2,
            scheme: Scheme::Bdf2,
            dt: 0.1,
            nu: 0.01,
            mu: 0.1,
            iterations: vec![0, 3],
        };
        assert_eq!(roundtrip(&rom, 2).1, rom);
        let p = PressureTrajectory {
            method: PressureMethod::Sm,
            quotient: Scheme::ImplicitEuler,
            times: vec![0.1],
            coefficients: vec![vec![-1.0]],
        };
        assert_eq!(roundtrip(&p, 3).1, p);
    }

    #[test]
    fn stale_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snapshots.podns");
        assert!(matches!(load::<SnapshotSet>(&path, None), Err(Error::MissingArtifact(_))));
        save(&path, &snapshots(), 11).unwrap();
        assert!(load::<SnapshotSet>(&path, Some(11)).is_ok());
        assert!(matches!(
            load::<SnapshotSet>(&path, Some(12)),
            Err(Error::StaleArtifact { artifact: 11, current: 12 })
        ));
    }
}
