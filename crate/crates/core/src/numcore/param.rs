use super::tensor::Tensor2;

/// A trainable tensor together with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor2,
    pub grad: Tensor2,
}

impl Param {
    pub fn new(value: Tensor2) -> Self {
        let grad = Tensor2::zeros(value.rows(), value.cols());
        Self { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Tensor2::zeros(rows, cols))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

type ParamFn<'a> = dyn FnMut(&str, &mut Param) + 'a;
type BufferFn<'a> = dyn FnMut(&str, &mut Tensor2) + 'a;

/// Walks the named parameters (and non-trainable buffers) of a model.
///
/// Names are dotted paths built from nested [`Visitor::scope`] calls, so
/// every tensor in a model has a stable address used by gradient checks,
/// optimizers, and checkpoints alike.
pub struct Visitor<'a> {
    path: Vec<String>,
    on_param: Option<&'a mut ParamFn<'a>>,
    on_buffer: Option<&'a mut BufferFn<'a>>,
}

impl<'a> Visitor<'a> {
    pub fn params(f: &'a mut ParamFn<'a>) -> Self {
        Self {
            path: Vec::new(),
            on_param: Some(f),
            on_buffer: None,
        }
    }

    pub fn buffers(f: &'a mut BufferFn<'a>) -> Self {
        Self {
            path: Vec::new(),
            on_param: None,
            on_buffer: Some(f),
        }
    }

    fn full_name(&self, name: &str) -> String {
        if self.path.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.path.join("."), name)
        }
    }

    pub fn param(&mut self, name: &str, p: &mut Param) {
        if self.on_param.is_some() {
            let full = self.full_name(name);
            if let Some(f) = self.on_param.as_mut() {
                f(&full, p);
            }
        }
    }

    pub fn buffer(&mut self, name: &str, t: &mut Tensor2) {
        if self.on_buffer.is_some() {
            let full = self.full_name(name);
            if let Some(f) = self.on_buffer.as_mut() {
                f(&full, t);
            }
        }
    }

    pub fn scope(&mut self, name: &str, inner: impl FnOnce(&mut Self)) {
        self.path.push(name.to_string());
        inner(self);
        self.path.pop();
    }
}

/// Anything that owns trainable parameters.
pub trait Parameterized {
    fn visit(&mut self, v: &mut Visitor<'_>);

    fn for_each_param(&mut self, mut f: impl FnMut(&str, &mut Param))
    where
        Self: Sized,
    {
        let mut g = |name: &str, p: &mut Param| f(name, p);
        let mut v = Visitor::params(&mut g);
        self.visit(&mut v);
    }

    fn for_each_buffer(&mut self, mut f: impl FnMut(&str, &mut Tensor2))
    where
        Self: Sized,
    {
        let mut g = |name: &str, t: &mut Tensor2| f(name, t);
        let mut v = Visitor::buffers(&mut g);
        self.visit(&mut v);
    }

    fn zero_grad(&mut self)
    where
        Self: Sized,
    {
        self.for_each_param(|_, p| p.zero_grad());
    }

    fn param_count(&mut self) -> usize
    where
        Self: Sized,
    {
        let mut n = 0;
        self.for_each_param(|_, p| n += p.len());
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Two {
        a: Param,
        b: Param,
        knots: Tensor2,
    }

    impl Parameterized for Two {
        fn visit(&mut self, v: &mut Visitor<'_>) {
            v.scope("inner", |v| v.param("a", &mut self.a));
            v.param("b", &mut self.b);
            v.buffer("knots", &mut self.knots);
        }
    }

    #[test]
    fn visitor_builds_dotted_names() {
        let mut m = Two {
            a: Param::zeros(1, 2),
            b: Param::zeros(3, 1),
            knots: Tensor2::zeros(1, 4),
        };
        let mut names = Vec::new();
        m.for_each_param(|n, _| names.push(n.to_string()));
        assert_eq!(names, ["inner.a", "b"]);
        let mut bufs = Vec::new();
        m.for_each_buffer(|n, _| bufs.push(n.to_string()));
        assert_eq!(bufs, ["knots"]);
        assert_eq!(m.param_count(), 5);
    }
}
