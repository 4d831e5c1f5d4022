"""Snapshot I/O and pricing helpers"""
