# Frontend Module