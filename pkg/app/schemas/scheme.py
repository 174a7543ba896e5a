"""
Schémas Pydantic pour les schémas de contraction
"""
from pydantic import BaseModel, ConfigDict
from typing import Dict, Tuple


class ContractionScheme(BaseModel):
    """Terme (ν, J, I, L) d'un opérateur de contre-terme"""
    model_config = ConfigDict(frozen=True)

    nu: int
    J: Tuple[int, ...]
    I: Tuple[int, ...]
    L: Tuple[int, ...]
    target_n: int
    target_m: int

    def sort_key(self) -> tuple:
        return (self.nu, self.J, self.I, self.L)


class Census(BaseModel):
    """Nombre de schémas par nombre m d'opérateurs de création"""
    n_plus_1: int
    counts: Dict[int, int]
    total: int
