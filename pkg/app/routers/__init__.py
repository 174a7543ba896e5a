# Routes API
