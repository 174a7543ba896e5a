"""
Service d'énumération des schémas de contraction (ν, J, I, L)
"""
from functools import lru_cache
from itertools import product
from typing import Iterator, List, Tuple
import logging

from app.exceptions import DomainError
from app.schemas.scheme import Census, ContractionScheme

logger = logging.getLogger(__name__)


def compositions(total: int, parts: int, max_part: int = None) -> Iterator[Tuple[int, ...]]:
    """Compositions ordonnées de total en parts entiers ≥ 1, ordre lexicographique"""
    max_part = total if max_part is None else max_part
    if parts == 0:
        if total == 0:
            yield ()
        return
    for first in range(1, min(max_part, total - parts + 1) + 1):
        for rest in compositions(total - first, parts - 1, max_part):
            yield (first,) + rest


def all_compositions(total: int) -> Iterator[Tuple[int, ...]]:
    """Toutes les compositions de total, par nombre de parts croissant"""
    for parts in range(1, total + 1):
        yield from compositions(total, parts)


def forced_L(I: Tuple[int, ...]) -> Tuple[int, ...]:
    """L imposé pour m = 0 : ℓ_0 = ‖I‖_∞, ℓ_μ = min(‖I_1^μ‖_∞, i_{μ+1}), ℓ_ν = 1"""
    middle = tuple(min(max(I[:mu]), I[mu]) for mu in range(1, len(I)))
    return (max(I),) + middle + (1,)


def _middle_windows(I: Tuple[int, ...]) -> Iterator[Tuple[int, ...]]:
    """ℓ_1..ℓ_{ν-1} : chaque contraction limitée par les variables disponibles des deux côtés"""
    nu = len(I)

    def extend(prefix: Tuple[int, ...]) -> Iterator[Tuple[int, ...]]:
        mu = len(prefix) + 1
        if mu == nu:
            yield prefix
            return
        available = sum(I[:mu]) - sum(prefix)
        for ell in range(min(available, I[mu]) + 1):
            yield from extend(prefix + (ell,))

    yield from extend(())


def valid_L(I: Tuple[int, ...], m: int) -> List[Tuple[int, ...]]:
    """Tous les L compatibles avec I et m"""
    needed = 1 + sum(I) - m
    if needed < 0:
        return []
    found = []
    for middle in _middle_windows(I):
        remaining = sum(I) - sum(middle)
        for ell_0 in range(min(1, remaining) + 1):
            ell_nu = needed - ell_0 - sum(middle)
            if 0 <= ell_nu <= min(1, 1 + remaining - ell_0):
                found.append((ell_0,) + middle + (ell_nu,))
    return sorted(found)


@lru_cache(maxsize=64)
def _enumerate(n_plus_1: int, m: int) -> Tuple[ContractionScheme, ...]:
    n = n_plus_1 - 1
    schemes = []
    for J in all_compositions(n):
        for I in product(*(range(j + 1) for j in J)):
            for L in valid_L(I, m):
                if m == 0 and L != forced_L(I):
                    continue
                schemes.append(ContractionScheme(nu=len(J), J=J, I=I, L=L,
                                                 target_n=n_plus_1, target_m=m))
    schemes.sort(key=ContractionScheme.sort_key)
    return tuple(schemes)


class SchemeService:
    """Service des schémas de contraction"""

    def enumerate_schemes(self, n_plus_1: int, m: int) -> List[ContractionScheme]:
        """Tous les schémas de θ_{n+1,m}, ordre lexicographique de (ν, J, I, L)"""
        if n_plus_1 < 2:
            raise DomainError("n_plus_1 doit être au moins 2 (le cas n=1 est explicite)")
        if m < 0:
            raise DomainError("m doit être positif ou nul")
        if m > n_plus_1:
            logger.warning(f"Aucun schéma pour m = {m} > n+1 = {n_plus_1}")
            return []
        return list(_enumerate(n_plus_1, m))

    def scheme_sign(self, scheme: ContractionScheme) -> int:
        """Préfacteur imprimé : (-1)^(ν+1) pour m ≥ 1, (-1)^ν pour m = 0"""
        if scheme.target_m >= 1:
            return (-1) ** (scheme.nu + 1)
        return (-1) ** scheme.nu

    def expansion_sign(self, scheme: ContractionScheme) -> int:
        """Signe produit par la récurrence de T : (-1)^(ν+1) pour tout m"""
        return (-1) ** (scheme.nu + 1)

    def tau_arity(self, scheme: ContractionScheme) -> int:
        return sum(scheme.I) - sum(scheme.L[1:-1])

    def census(self, n_plus_1: int) -> Census:
        """Nombre de schémas par m pour un niveau donné"""
        if not 2 <= n_plus_1 <= 6:
            raise DomainError("census accepte 2 ≤ n_plus_1 ≤ 6")
        counts = {m: len(self.enumerate_schemes(n_plus_1, m)) for m in range(n_plus_1 + 1)}
        return Census(n_plus_1=n_plus_1, counts=counts, total=sum(counts.values()))


# Instance globale
scheme_service = SchemeService()
