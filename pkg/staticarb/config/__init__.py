"""Configuration package"""