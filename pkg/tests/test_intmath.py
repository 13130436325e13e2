import math

import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from oddcover.intmath import (
    NotCoprime,
    crt_pair,
    factorize,
    gcd_lcm,
    is_prime,
    mod_inverse,
    next_usable_prime,
    valuation,
)

pos = st.integers(min_value=1, max_value=10**12)


@given(st.integers(0, 10**15), st.integers(0, 10**15))
def test_gcd_lcm_identity(a, b):
    g, l = gcd_lcm(a, b)
    assert g == math.gcd(a, b)
    assert g * l == a * b


def test_gcd_lcm_examples():
    assert gcd_lcm(12, 18) == (6, 36)
    assert gcd_lcm(0, 5) == (5, 0)
    with pytest.raises(ValueError):
        gcd_lcm(-1, 3)


@given(st.integers(-10**9, 10**9), st.integers(2, 10**6))
def test_mod_inverse_agrees_with_sympy(a, m):
    if math.gcd(a, m) != 1:
        with pytest.raises(NotCoprime):
            mod_inverse(a, m)
    else:
        assert mod_inverse(a, m) == sympy.mod_inverse(a, m)


def test_mod_inverse_small_cases():
    assert mod_inverse(3, 7) == 5
    assert mod_inverse(5, 1) == 0


@given(st.integers(0, 10**6), pos, st.integers(0, 10**6), pos)
def test_crt_pair_matches_sympy(r1, m1, r2, m2):
    got = crt_pair(r1, m1, r2, m2)
    want = sympy.ntheory.modular.solve_congruence((r1, m1), (r2, m2))
    if want is None:
        assert got is None
    else:
        assert got == (int(want[0]), int(want[1]))


def test_crt_pair_examples():
    assert crt_pair(2, 3, 3, 5) == (8, 15)
    assert crt_pair(1, 4, 2, 6) is None
    assert crt_pair(1, 6, 3, 4) == (7, 12)


@given(st.integers(-5, 2 * 10**6))
def test_is_prime_small_range(n):
    assert is_prime(n) == sympy.isprime(n)


@given(st.integers(10**6, 10**30))
def test_is_prime_large(n):
    assert is_prime(n) == sympy.isprime(n)


def test_is_prime_known_hard_composites():
    carmichael = [561, 41041, 3215031751, 3825123056546413051]
    assert not any(is_prime(n) for n in carmichael)
    assert is_prime(2**61 - 1) and is_prime(2**89 - 1)


@given(st.integers(1, 10**14))
def test_factorize_matches_sympy(n):
    assert factorize(n) == sorted(sympy.factorint(n).items())


def test_factorize_semiprime_needs_rho():
    p, q = 1000003, 998244353
    assert factorize(p * q * q) == [(p, 1), (q, 2)]


def test_factorize_rejects_zero():
    with pytest.raises(ValueError):
        factorize(0)


def test_next_usable_prime():
    assert next_usable_prime(13, {17}) == 19
    assert next_usable_prime(29, {3, 5, 7}) == 31
    assert next_usable_prime(1) == 2


@given(st.integers(1, 10**12), st.sampled_from([3, 5, 7, 11]))
def test_valuation(n, p):
    assert valuation(n, p) == sympy.multiplicity(p, n)
