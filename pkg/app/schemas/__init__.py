# Schémas Pydantic
