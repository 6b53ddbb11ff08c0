# betacov backend: beta-matrix covariance equality test
