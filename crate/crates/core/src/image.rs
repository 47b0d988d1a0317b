use crate::candidate::Pixel;

/// Row-major `height × width` raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<E> {
    width: usize,
    height: usize,
    data: Vec<E>,
}

impl<E: Clone> Image<E> {
    pub fn filled(width: usize, height: usize, value: E) -> Self {
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<E> Image<E> {
    /// `None` when `data.len() != width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<E>) -> Option<Self> {
        (data.len() == width * height).then_some(Image {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(Pixel) -> E) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(Pixel { u, v }));
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `[height, width]`, the on-disk array shape.
    pub fn shape(&self) -> [usize; 2] {
        [self.height, self.width]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index_of(&self, p: Pixel) -> usize {
        p.v * self.width + p.u
    }

    #[inline]
    pub fn pixel_of(&self, index: usize) -> Pixel {
        Pixel {
            u: index % self.width,
            v: index / self.width,
        }
    }

    #[inline]
    pub fn contains(&self, u: i64, v: i64) -> bool {
        u >= 0 && v >= 0 && (u as usize) < self.width && (v as usize) < self.height
    }

    #[inline]
    pub fn at(&self, p: Pixel) -> &E {
        &self.data[p.v * self.width + p.u]
    }

    #[inline]
    pub fn at_mut(&mut self, p: Pixel) -> &mut E {
        &mut self.data[p.v * self.width + p.u]
    }

    pub fn as_slice(&self) -> &[E] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<E> {
        self.data
    }

    pub fn map<F, U>(&self, f: F) -> Image<U>
    where
        F: FnMut(&E) -> U,
    {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<E> std::ops::Index<usize> for Image<E> {
    type Output = E;

    fn index(&self, i: usize) -> &E {
        &self.data[i]
    }
}

impl<E> std::ops::IndexMut<usize> for Image<E> {
    fn index_mut(&mut self, i: usize) -> &mut E {
        &mut self.data[i]
    }
}
