# Scripts package - system validation entry points
