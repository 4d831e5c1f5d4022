"""API routers package"""