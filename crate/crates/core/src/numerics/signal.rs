use std::io::{Read, Write};

use num_complex::Complex;

use super::scalar::{self, Scalar};
use crate::error::{Error, Result};

/// Complex vector stored as one buffer `[re_0 .. re_{n-1}, im_0 .. im_{n-1}]`.
///
/// The buffer is exactly the stacked real form `[x_R; x_I]`, so handing a
/// signal to a real-embedded operator is a borrow, not a copy.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal<T> {
    len: usize,
    data: Vec<T>,
}

impl<T: Scalar> Signal<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            data: vec![T::zero(); 2 * len],
        }
    }

    pub fn new(re: &[T], im: &[T]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::Dimension {
                expected: re.len(),
                got: im.len(),
                context: "signal imaginary part",
            });
        }
        let mut data = Vec::with_capacity(2 * re.len());
        data.extend_from_slice(re);
        data.extend_from_slice(im);
        Self::from_stacked(data)
    }

    pub fn from_real(re: &[T]) -> Self {
        let mut s = Self::zeros(re.len());
        s.re_mut().copy_from_slice(re);
        s
    }

    /// Builds a signal from its stacked real form `[re; im]`.
    pub fn from_stacked(data: Vec<T>) -> Result<Self> {
        if data.len() % 2 != 0 {
            return Err(Error::Invalid("stacked signal must have even length".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("signal entries must be finite".into()));
        }
        Ok(Self {
            len: data.len() / 2,
            data,
        })
    }

    pub fn from_complex(values: &[Complex<T>]) -> Self {
        let n = values.len();
        let mut s = Self::zeros(n);
        for (i, c) in values.iter().enumerate() {
            s.data[i] = c.re;
            s.data[n + i] = c.im;
        }
        s
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn re(&self) -> &[T] {
        &self.data[..self.len]
    }

    #[inline]
    pub fn im(&self) -> &[T] {
        &self.data[self.len..]
    }

    #[inline]
    pub fn re_mut(&mut self) -> &mut [T] {
        &mut self.data[..self.len]
    }

    #[inline]
    pub fn im_mut(&mut self) -> &mut [T] {
        let n = self.len;
        &mut self.data[n..]
    }

    pub fn parts_mut(&mut self) -> (&mut [T], &mut [T]) {
        self.data.split_at_mut(self.len)
    }

    /// Stacked real view `[re; im]`.
    #[inline]
    pub fn as_stacked(&self) -> &[T] {
        &self.data
    }

    pub fn as_stacked_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_stacked(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize) -> Complex<T> {
        Complex::new(self.data[i], self.data[self.len + i])
    }

    #[inline]
    pub fn set(&mut self, i: usize, c: Complex<T>) {
        self.data[i] = c.re;
        self.data[self.len + i] = c.im;
    }

    pub fn to_complex(&self) -> Vec<Complex<T>> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn magnitudes(&self) -> Vec<T> {
        (0..self.len).map(|i| self.get(i).norm()).collect()
    }

    pub fn norm(&self) -> T {
        scalar::norm2(&self.data)
    }

    pub fn norm_sq(&self) -> T {
        scalar::norm2_sq(&self.data)
    }

    /// `⟨self, other⟩ = Σ self_i · conj(other_i)`
    pub fn inner(&self, other: &Self) -> Complex<T> {
        assert_eq!(self.len, other.len);
        (0..self.len)
            .map(|i| self.get(i) * other.get(i).conj())
            .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len);
        Self {
            len: self.len,
            data: scalar::add(&self.data, &other.data),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len);
        Self {
            len: self.len,
            data: scalar::sub(&self.data, &other.data),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            len: self.len,
            data: scalar::scale(&self.data, s),
        }
    }

    pub fn scale_complex(&self, s: Complex<T>) -> Self {
        let mut out = Self::zeros(self.len);
        for i in 0..self.len {
            out.set(i, self.get(i) * s);
        }
        out
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        for v in out.im_mut() {
            *v = -*v;
        }
        out
    }

    /// Elementwise complex product.
    pub fn mul_elem(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len);
        let mut out = Self::zeros(self.len);
        for i in 0..self.len {
            out.set(i, self.get(i) * other.get(i));
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.len, other.len);
        scalar::max_abs(&scalar::sub(&self.data, &other.data))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Signal<U> {
        Signal {
            len: self.len,
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }

    /// Reads `index,re,im` rows (header required). Indices must be `0..n` in order.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut re = Vec::new();
        let mut im = Vec::new();
        for (expected, record) in rdr.deserialize::<(usize, f64, f64)>().enumerate() {
            let (index, r, i) = record?;
            if index != expected {
                return Err(Error::Parse(format!(
                    "signal index {index} out of order (expected {expected})"
                )));
            }
            re.push(T::lit(r));
            im.push(T::lit(i));
        }
        Self::new(&re, &im)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["index", "re", "im"])?;
        for i in 0..self.len {
            wtr.write_record([
                i.to_string(),
                format!("{:e}", self.re()[i].as_f64()),
                format!("{:e}", self.im()[i].as_f64()),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
