# CAMERA accident-anticipation package
