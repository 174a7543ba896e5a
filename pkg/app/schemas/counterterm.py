"""
Schémas Pydantic pour les contre-termes
"""
from pydantic import BaseModel
from typing import List, Optional

from app.models.physics import FitModel


class DivergenceFit(BaseModel):
    """Ajustement de la divergence en Λ d'une suite de valeurs"""
    model: FitModel
    predicted: float
    exponent: Optional[float] = None     # modèle power
    coefficient: float                   # préfacteur, coefficient du log ou limite
    offset: float = 0.0
    residual: float
    competing_model: FitModel
    competing_residual: float
    monotone: bool = True


class E2Terms(BaseModel):
    """Les deux espérances dans le vide qui composent E_{Λ,2}"""
    cutoff: float
    positive_term: float     # ⟨v² θ_{Λ,1,0}⟩, positif
    negative_term: float     # ⟨θ_{Λ,1,1}⟩ contracté, négatif
    total: float
    error_estimate: float


class CounterTermRow(BaseModel):
    cutoff: float
    n: int
    value: float
    abs_error_estimate: float


class CounterTermTable(BaseModel):
    """Table des E_{Λ,n} sur un balayage en Λ"""
    lambdas: List[float]
    orders: List[int]
    values: List[List[float]]          # [n][Λ]
    errors: List[List[float]]
    totals: List[float]                # E_Λ = Σ_n E_{Λ,n}
    fits: List[DivergenceFit]
    fitted_exponents: List[str]        # exposant ou "log"
    fit_residuals: List[float]

    def rows(self) -> List[CounterTermRow]:
        return [CounterTermRow(cutoff=cutoff, n=n, value=self.values[i][j],
                               abs_error_estimate=self.errors[i][j])
                for i, n in enumerate(self.orders) for j, cutoff in enumerate(self.lambdas)]
