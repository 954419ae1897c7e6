'''Exceptions and warnings raised by semicox.
'''


class SemicoxError(Exception):
    '''Base class for all the errors raised by semicox'''


class DataError(SemicoxError):
    '''The input data or the column schema are not valid'''


class StructureError(SemicoxError):
    '''An ANOVA structure is not valid for the data or is not nested in the
    fitted one'''


class ConvergenceError(SemicoxError):
    '''A numerical procedure failed and no usable estimate could be
    returned'''


class ConvergenceWarning(RuntimeWarning):
    '''A numerical procedure did not converge, but its best iterate was
    returned'''
