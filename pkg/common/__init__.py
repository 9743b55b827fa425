"""Cross-cutting services: logging, metrics, storage, settings, seeding"""
