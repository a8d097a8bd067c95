# Dashboard chart builders (plotly figures from run artifacts)
