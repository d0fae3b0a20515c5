# Makes 'app' a Python package. Sub-packages are imported where needed;
# the runtime object that wires them together lives in app.fabric.
