def random_hermitian(rng, dim, scale=1.0, real=False):
    m = rng.normal(size=(dim, dim))
    if not real:
        m = m + 1j * rng.normal(size=(dim, dim))
    return scale * (m + m.conj().T) / 2
