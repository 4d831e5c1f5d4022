"""Domain models, constraint types and errors"""
