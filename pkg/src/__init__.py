# RMT Lab - random covariance matrix numerics
# Core package initialization
